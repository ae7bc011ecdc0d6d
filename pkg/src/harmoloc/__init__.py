"""Harmonic-backscatter link simulator and localization toolkit."""

__version__ = "0.1.0"

from .errors import HarmolocError
from .model import (
    AntennaSpec,
    Box,
    DevicePlacement,
    IqCapture,
    MediumStack,
    Pattern,
    Position,
    Scenario,
    TissueSlab,
    harmonics_of,
    load_scenario,
    material_at,
    save_scenario,
    scenario_hash,
)
from .backscatter import DiodeModel, IncidentTone, mix
from .propagation import (
    effective_distance,
    path_attenuation_db,
    path_phase,
    pattern_gain_db,
    trace_path,
)
from .synthesis import (
    device_tone_set,
    read_capture,
    synthesize_all,
    synthesize_capture,
    write_capture,
)
from .dsp import (
    PsdEstimate,
    TonePhasor,
    extract_tone_phasor,
    peak_power_db,
    relative_gain_db,
    spectrogram,
    welch_psd,
)
from .localizer import (
    LocalizationResult,
    LocalizerParams,
    Measurement,
    MeasurementSet,
    adam_minimize,
    localization_error_cm,
    localize,
    measurement_set_from_captures,
    model_phase,
    objective,
)
from .presets import PRESET_NAMES, scenario_preset

__all__ = [
    "AntennaSpec",
    "Box",
    "DevicePlacement",
    "DiodeModel",
    "HarmolocError",
    "IncidentTone",
    "IqCapture",
    "LocalizationResult",
    "LocalizerParams",
    "Measurement",
    "MeasurementSet",
    "MediumStack",
    "PRESET_NAMES",
    "Pattern",
    "Position",
    "PsdEstimate",
    "Scenario",
    "TissueSlab",
    "TonePhasor",
    "adam_minimize",
    "device_tone_set",
    "effective_distance",
    "extract_tone_phasor",
    "harmonics_of",
    "load_scenario",
    "localization_error_cm",
    "localize",
    "material_at",
    "measurement_set_from_captures",
    "mix",
    "model_phase",
    "objective",
    "path_attenuation_db",
    "path_phase",
    "pattern_gain_db",
    "peak_power_db",
    "read_capture",
    "relative_gain_db",
    "save_scenario",
    "scenario_hash",
    "scenario_preset",
    "spectrogram",
    "synthesize_all",
    "synthesize_capture",
    "welch_psd",
    "write_capture",
]
