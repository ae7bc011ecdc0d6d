"""Core scenario types and unit conventions.

Everything inside the package works in SI base units: meters, Hz, radians,
linear amplitude. Centimeters, MHz and dB appear only in files and on the
CLI surface, converted at the boundary by the helpers below.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .backscatter import DiodeModel
from .errors import EmptyCapture, NonPositiveHarmonic, ScenarioError, SchemaMismatch

SPEED_OF_LIGHT = 299_792_458.0
TWO_PI = 2.0 * math.pi

SCENARIO_SCHEMA = 1


# --- unit boundary helpers -------------------------------------------------

def cm_to_m(v: float) -> float:
    return v / 100.0


def m_to_cm(v: float) -> float:
    # Round at 1e-9 cm so that cm -> m -> cm is exact for file inputs with
    # up to two decimal places (naive v/100*100 drifts for values like 0.23).
    return round(v * 100.0, 9)


def mhz_to_hz(v: float) -> float:
    return v * 1e6


def hz_to_mhz(v: float) -> float:
    return round(v / 1e6, 9)


def db_to_amplitude(db: float) -> float:
    return 10.0 ** (db / 20.0)


def db_to_power(db: float) -> float:
    return 10.0 ** (db / 10.0)


def amplitude_to_db(a: float) -> float:
    return 20.0 * math.log10(a)


def power_to_db(p: float) -> float:
    return 10.0 * math.log10(p)


def wrap_two_pi(x):
    """Wrap an angle (scalar or array) into [0, 2*pi)."""
    r = np.mod(x, TWO_PI)
    # mod can return exactly 2*pi for tiny negative inputs
    r = np.where(r >= TWO_PI, r - TWO_PI, r)
    return float(r) if np.isscalar(x) else r


def wrap_pm_pi(x):
    """Wrap an angle difference (scalar or array) into (-pi, pi]."""
    r = math.pi - np.mod(math.pi - np.asarray(x, dtype=float), TWO_PI)
    return float(r) if np.isscalar(x) else r


def wavelength(frequency_hz: float) -> float:
    if frequency_hz <= 0:
        raise ScenarioError(f"frequency must be positive, got {frequency_hz}")
    return SPEED_OF_LIGHT / frequency_hz


# --- geometry --------------------------------------------------------------

@dataclass(frozen=True)
class Position:
    """A point in meters, lab frame."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def to_cm(self) -> tuple[float, float, float]:
        return (m_to_cm(self.x), m_to_cm(self.y), m_to_cm(self.z))

    @classmethod
    def from_cm(cls, x: float, y: float, z: float) -> "Position":
        return cls(cm_to_m(x), cm_to_m(y), cm_to_m(z))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in meters."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "min_corner", tuple(float(v) for v in self.min_corner))
        object.__setattr__(self, "max_corner", tuple(float(v) for v in self.max_corner))
        for lo, hi in zip(self.min_corner, self.max_corner):
            if not hi > lo:
                raise ScenarioError(f"box must have positive extent, got {self}")

    def contains(self, p: Position) -> bool:
        return all(
            lo <= v <= hi
            for v, lo, hi in zip((p.x, p.y, p.z), self.min_corner, self.max_corner)
        )


# --- antennas --------------------------------------------------------------

@dataclass(frozen=True)
class Pattern:
    """Antenna radiation pattern.

    kind 'omni' ignores the other fields. kind 'horn' has a Gaussian-shaped
    main lobe: gain_db = -12 * (theta / beamwidth_deg)^2, floored at -30 dB,
    where theta is the angle off boresight in degrees. That puts the -3 dB
    point at half the beamwidth off axis.
    """

    kind: str = "omni"
    boresight: tuple[float, float, float] = (0.0, 1.0, 0.0)
    beamwidth_deg: float = 60.0

    def __post_init__(self):
        if self.kind not in ("omni", "horn"):
            raise ScenarioError(f"unknown pattern kind {self.kind!r}")
        object.__setattr__(self, "boresight", tuple(float(v) for v in self.boresight))
        if self.kind == "horn":
            if not 0.0 < self.beamwidth_deg <= 180.0:
                raise ScenarioError("horn beamwidth must be in (0, 180] degrees")
            if all(v == 0.0 for v in self.boresight):
                raise ScenarioError("horn boresight must be a nonzero vector")


OMNI = Pattern(kind="omni")


@dataclass(frozen=True)
class AntennaSpec:
    """One antenna: identity, role, placement, pattern, cabling gain."""

    id: str
    role: str  # "tx" or "rx"
    position: Position
    pattern: Pattern = OMNI
    chain_gain_db: float = 0.0
    drive_amplitude: float = 1.0  # linear tx drive, ignored for rx

    def __post_init__(self):
        if not self.id:
            raise ScenarioError("antenna id must be nonempty")
        if self.role not in ("tx", "rx"):
            raise ScenarioError(f"antenna role must be 'tx' or 'rx', got {self.role!r}")
        if self.drive_amplitude < 0:
            raise ScenarioError("drive amplitude must be nonnegative")


# --- media -----------------------------------------------------------------

@dataclass(frozen=True)
class TissueSlab:
    """A homogeneous dielectric block.

    Attenuation scales with frequency as atten_db_per_m * (f/ref_freq_hz)^freq_exponent.
    extent None marks the unbounded background medium.
    """

    material: str
    rel_permittivity: float
    atten_db_per_m: float = 0.0
    ref_freq_hz: float = 900e6
    freq_exponent: float = 1.0
    extent: Box | None = None

    def __post_init__(self):
        if self.rel_permittivity < 1.0:
            raise ScenarioError(f"relative permittivity must be >= 1, got {self.rel_permittivity}")
        if self.atten_db_per_m < 0.0:
            raise ScenarioError("attenuation must be nonnegative")
        if self.ref_freq_hz <= 0.0:
            raise ScenarioError("attenuation reference frequency must be positive")

    def attenuation_at(self, frequency_hz: float) -> float:
        """dB per meter at the given frequency."""
        return self.atten_db_per_m * (frequency_hz / self.ref_freq_hz) ** self.freq_exponent


AIR = TissueSlab(material="air", rel_permittivity=1.0, atten_db_per_m=0.0)


@dataclass(frozen=True)
class MediumStack:
    """Bounded slabs over an unbounded background. First containing slab wins."""

    slabs: tuple[TissueSlab, ...] = ()
    background: TissueSlab = AIR

    def __post_init__(self):
        object.__setattr__(self, "slabs", tuple(self.slabs))
        for slab in self.slabs:
            if slab.extent is None:
                raise ScenarioError(f"slab {slab.material!r} needs a bounded extent")
        if self.background.extent is not None:
            raise ScenarioError("background medium must be unbounded")

    def material_at(self, p: Position) -> TissueSlab:
        for slab in self.slabs:
            if slab.extent.contains(p):
                return slab
        return self.background


def material_at(medium: MediumStack, p: Position) -> TissueSlab:
    """Slab containing the point; points on a face belong to the earlier slab."""
    return medium.material_at(p)


FREE_SPACE = MediumStack()


# --- device and scenario ---------------------------------------------------

@dataclass(frozen=True)
class InterferenceTone:
    """A deterministic interfering carrier mixed into every overlapping capture."""

    frequency_hz: float
    amplitude: float
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ScenarioError("interference frequency must be positive")
        if self.amplitude < 0:
            raise ScenarioError("interference amplitude must be nonnegative")


@dataclass(frozen=True)
class DevicePlacement:
    """The embedded nonlinear device: where it sits and how it mixes."""

    position: Position
    diode: DiodeModel = field(default_factory=DiodeModel)
    phase_offset_low_rad: float = 0.0
    phase_offset_high_rad: float = 0.0

    def phase_offset(self, label: str) -> float:
        if label == "h_low":
            return self.phase_offset_low_rad
        if label == "h_high":
            return self.phase_offset_high_rad
        raise ScenarioError(f"unknown harmonic label {label!r}")


def harmonics_of(f1_hz: float, f2_hz: float) -> tuple[float, float]:
    """Mixing products radiated by the device: (2*f1 - f2, f1 + f2)."""
    if f1_hz <= 0 or f2_hz <= 0:
        raise ScenarioError("carrier frequencies must be positive")
    if f1_hz == f2_hz:
        raise ScenarioError("carrier frequencies must differ")
    h_low = 2.0 * f1_hz - f2_hz
    if h_low <= 0:
        raise NonPositiveHarmonic(
            f"2*f1 - f2 = {h_low} Hz is not positive for f1={f1_hz}, f2={f2_hz}"
        )
    return (h_low, f1_hz + f2_hz)


HARMONIC_LABELS = ("h_low", "h_high")


@dataclass(frozen=True)
class Scenario:
    """A complete bench setup: carriers, antennas, medium, device, noise."""

    f1_hz: float
    f2_hz: float
    antennas: tuple[AntennaSpec, ...]
    medium: MediumStack = FREE_SPACE
    device: DevicePlacement | None = None
    noise_psd_db: float | None = None  # dBFS/Hz at the receiver, None = noiseless
    interference: tuple[InterferenceTone, ...] = ()
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "antennas", tuple(self.antennas))
        object.__setattr__(self, "interference", tuple(self.interference))
        harmonics_of(self.f1_hz, self.f2_hz)
        ids = [a.id for a in self.antennas]
        if len(set(ids)) != len(ids):
            raise ScenarioError("antenna ids must be unique")
        if len(self.transmitters) < 2:
            raise ScenarioError("scenario needs at least two transmit antennas")
        if len(self.receivers) < 1:
            raise ScenarioError("scenario needs at least one receive antenna")

    @property
    def transmitters(self) -> tuple[AntennaSpec, ...]:
        return tuple(a for a in self.antennas if a.role == "tx")

    @property
    def receivers(self) -> tuple[AntennaSpec, ...]:
        return tuple(a for a in self.antennas if a.role == "rx")

    @property
    def tx1(self) -> AntennaSpec:
        """Transmitter driving f1 (first tx in declaration order)."""
        return self.transmitters[0]

    @property
    def tx2(self) -> AntennaSpec:
        """Transmitter driving f2 (second tx in declaration order)."""
        return self.transmitters[1]

    def harmonics(self) -> tuple[float, float]:
        return harmonics_of(self.f1_hz, self.f2_hz)

    def harmonic_hz(self, label: str) -> float:
        h_low, h_high = self.harmonics()
        if label == "h_low":
            return h_low
        if label == "h_high":
            return h_high
        raise ScenarioError(f"unknown harmonic label {label!r}")

    def antenna(self, antenna_id: str) -> AntennaSpec:
        for a in self.antennas:
            if a.id == antenna_id:
                return a
        raise ScenarioError(f"no antenna with id {antenna_id!r}")

    def with_device_at(self, p: Position) -> "Scenario":
        if self.device is None:
            raise ScenarioError("scenario has no device to move")
        return replace(self, device=replace(self.device, position=p))

    def without_device(self) -> "Scenario":
        return replace(self, device=None)


# --- captures --------------------------------------------------------------

@dataclass(frozen=True)
class CaptureMeta:
    """Receiver-side provenance for one IQ capture."""

    rx_id: str
    rx_gain_db: float = 0.0
    scenario_hash: str = ""
    seed: int = 0
    harmonic_label: str = ""


@dataclass
class IqCapture:
    """Complex baseband samples with their tuning information."""

    samples: np.ndarray
    sample_rate_hz: float
    center_frequency_hz: float
    meta: CaptureMeta

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise ScenarioError("capture samples must be one-dimensional")
        if self.samples.shape[0] < 1:
            raise EmptyCapture("capture holds no samples")

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.n / self.sample_rate_hz


# --- scenario JSON ----------------------------------------------------------

def _pattern_to_dict(p: Pattern) -> dict:
    if p.kind == "omni":
        return {"kind": "omni"}
    return {
        "kind": "horn",
        "boresight": list(p.boresight),
        "beamwidth_deg": p.beamwidth_deg,
    }


def _pattern_from_dict(d: dict) -> Pattern:
    kind = d.get("kind", "omni")
    if kind == "omni":
        return OMNI
    return Pattern(
        kind="horn",
        boresight=tuple(d.get("boresight", (0.0, 1.0, 0.0))),
        beamwidth_deg=float(d.get("beamwidth_deg", 60.0)),
    )


def _slab_to_dict(s: TissueSlab) -> dict:
    d = {
        "material": s.material,
        "rel_permittivity": s.rel_permittivity,
        "atten_db_per_m": s.atten_db_per_m,
        "ref_freq_mhz": hz_to_mhz(s.ref_freq_hz),
        "freq_exponent": s.freq_exponent,
    }
    if s.extent is not None:
        d["extent_cm"] = {
            "min": [m_to_cm(v) for v in s.extent.min_corner],
            "max": [m_to_cm(v) for v in s.extent.max_corner],
        }
    return d


def _slab_from_dict(d: dict) -> TissueSlab:
    try:
        extent = None
        if d.get("extent_cm") is not None:
            extent = Box(
                min_corner=tuple(cm_to_m(float(v)) for v in d["extent_cm"]["min"]),
                max_corner=tuple(cm_to_m(float(v)) for v in d["extent_cm"]["max"]),
            )
        return TissueSlab(
            material=str(d["material"]),
            rel_permittivity=float(d["rel_permittivity"]),
            atten_db_per_m=float(d.get("atten_db_per_m", 0.0)),
            ref_freq_hz=mhz_to_hz(float(d.get("ref_freq_mhz", 900.0))),
            freq_exponent=float(d.get("freq_exponent", 1.0)),
            extent=extent,
        )
    except KeyError as e:
        raise SchemaMismatch(f"slab entry missing field {e}") from e


def scenario_to_dict(sc: Scenario) -> dict:
    d: dict = {
        "schema": SCENARIO_SCHEMA,
        "name": sc.name,
        "carriers_mhz": {"f1": hz_to_mhz(sc.f1_hz), "f2": hz_to_mhz(sc.f2_hz)},
        "noise_psd_db_per_hz": sc.noise_psd_db,
        "seed": sc.seed,
        "antennas": [
            {
                "id": a.id,
                "role": a.role,
                "position_cm": list(a.position.to_cm()),
                "pattern": _pattern_to_dict(a.pattern),
                "chain_gain_db": a.chain_gain_db,
                "drive_amplitude": a.drive_amplitude,
            }
            for a in sc.antennas
        ],
        "medium": {
            "background": _slab_to_dict(sc.medium.background),
            "slabs": [_slab_to_dict(s) for s in sc.medium.slabs],
        },
    }
    if sc.device is not None:
        d["device"] = {
            "position_cm": list(sc.device.position.to_cm()),
            "diode": {
                "a2": sc.device.diode.a2,
                "a3": sc.device.diode.a3,
                "reradiation_loss_db": sc.device.diode.reradiation_loss_db,
            },
            "phase_offset_low_rad": sc.device.phase_offset_low_rad,
            "phase_offset_high_rad": sc.device.phase_offset_high_rad,
        }
    if sc.interference:
        d["interference"] = [
            {"frequency_mhz": hz_to_mhz(t.frequency_hz), "amplitude": t.amplitude,
             "phase_rad": t.phase_rad}
            for t in sc.interference
        ]
    return d


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise SchemaMismatch("scenario document must be a JSON object")
    if d.get("schema") != SCENARIO_SCHEMA:
        raise SchemaMismatch(
            f"unsupported scenario schema {d.get('schema')!r}, expected {SCENARIO_SCHEMA}"
        )
    try:
        carriers = d["carriers_mhz"]
        antennas = []
        for a in d["antennas"]:
            x, y, z = (float(v) for v in a["position_cm"])
            antennas.append(
                AntennaSpec(
                    id=str(a["id"]),
                    role=str(a["role"]),
                    position=Position.from_cm(x, y, z),
                    pattern=_pattern_from_dict(a.get("pattern", {"kind": "omni"})),
                    chain_gain_db=float(a.get("chain_gain_db", 0.0)),
                    drive_amplitude=float(a.get("drive_amplitude", 1.0)),
                )
            )
        med = d.get("medium", {})
        background = AIR
        if "background" in med:
            background = _slab_from_dict(med["background"])
        medium = MediumStack(
            slabs=tuple(_slab_from_dict(s) for s in med.get("slabs", ())),
            background=background,
        )
        device = None
        if d.get("device") is not None:
            dv = d["device"]
            x, y, z = (float(v) for v in dv["position_cm"])
            diode_d = dv.get("diode", {})
            device = DevicePlacement(
                position=Position.from_cm(x, y, z),
                diode=DiodeModel(
                    a2=float(diode_d.get("a2", 0.1)),
                    a3=float(diode_d.get("a3", 0.05)),
                    reradiation_loss_db=float(diode_d.get("reradiation_loss_db", 10.0)),
                ),
                phase_offset_low_rad=float(dv.get("phase_offset_low_rad", 0.0)),
                phase_offset_high_rad=float(dv.get("phase_offset_high_rad", 0.0)),
            )
        interference = tuple(
            InterferenceTone(
                frequency_hz=mhz_to_hz(float(t["frequency_mhz"])),
                amplitude=float(t["amplitude"]),
                phase_rad=float(t.get("phase_rad", 0.0)),
            )
            for t in d.get("interference", ())
        )
        noise = d.get("noise_psd_db_per_hz")
        return Scenario(
            f1_hz=mhz_to_hz(float(carriers["f1"])),
            f2_hz=mhz_to_hz(float(carriers["f2"])),
            antennas=tuple(antennas),
            medium=medium,
            device=device,
            noise_psd_db=None if noise is None else float(noise),
            interference=interference,
            seed=int(d.get("seed", 0)),
            name=str(d.get("name", "")),
        )
    except KeyError as e:
        raise SchemaMismatch(f"scenario document missing field {e}") from e
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"bad scenario value: {e}") from e


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(sc), f, indent=2, sort_keys=True)
        f.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaMismatch(f"scenario file is not valid JSON: {e}") from e
    return scenario_from_dict(d)


def scenario_hash(sc: Scenario) -> str:
    """Stable 16-hex-digit digest of the canonical scenario document."""
    canon = json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]
