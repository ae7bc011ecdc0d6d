"""Domain exceptions.

Every failure mode that callers are expected to handle gets its own class so
that the service layer can map them to structured HTTP errors and the CLI can
map them to exit codes without string matching.
"""


class HarmolocError(Exception):
    """Base class for all domain errors raised by this package."""


class ScenarioError(HarmolocError):
    """A scenario, geometry or parameter value fails validation."""


class NonPositiveHarmonic(ScenarioError):
    """The low-side mixing product 2*f1 - f2 would be at or below 0 Hz."""


class DegeneratePath(HarmolocError):
    """Ray tracing was asked for a path between two coincident points."""


class EmptyCapture(HarmolocError):
    """A capture would contain no samples (or too few to be usable)."""


class AliasedTone(HarmolocError):
    """A requested tone offset falls outside the representable bandwidth."""


class CaptureTooShort(HarmolocError):
    """A capture has fewer samples than the analysis window requires."""


class TruncatedFile(HarmolocError):
    """An IQ file's byte length is not a whole number of complex samples."""


class MissingSidecar(HarmolocError):
    """An IQ file has no metadata sidecar next to it."""


class SchemaMismatch(HarmolocError):
    """A JSON document's schema tag or required fields are wrong."""


class FrequencyOutOfSpan(HarmolocError):
    """A requested frequency lies outside a spectrum's analyzed span."""


class IncompatiblePsds(HarmolocError):
    """Two spectra cannot be compared bin-for-bin."""


class InsufficientSignal(HarmolocError):
    """A tone's estimated SNR is below the usability floor."""


class NonFiniteObjective(HarmolocError):
    """The optimizer encountered a NaN or infinite objective value."""


class NoUsableMeasurements(HarmolocError):
    """No phase measurement survived screening; nothing to localize."""


class NoConvergedStart(HarmolocError):
    """No optimizer start satisfied the convergence test."""


class EmptyReport(HarmolocError):
    """A report with no rows cannot be rendered."""
