"""Request/response models for the HTTP service.

The scenario payload mirrors the on-disk scenario JSON document exactly;
semantic validation (antenna roles, slab extents, harmonic positivity)
is delegated to the scenario loader so the service and the file format
can never drift apart.
"""

from __future__ import annotations

import base64
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..model import (
    SCENARIO_SCHEMA,
    Box,
    IqCapture,
    Scenario,
    scenario_from_dict,
    scenario_to_dict,
)


class PatternModel(BaseModel):
    kind: str = "omni"
    boresight: Tuple[float, float, float] = (0.0, 1.0, 0.0)
    beamwidth_deg: float = 60.0


class AntennaModel(BaseModel):
    id: str
    role: str
    position_cm: Tuple[float, float, float]
    pattern: PatternModel = Field(default_factory=PatternModel)
    chain_gain_db: float = 0.0
    drive_amplitude: float = 1.0


class ExtentModel(BaseModel):
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]


class SlabModel(BaseModel):
    material: str
    rel_permittivity: float
    atten_db_per_m: float
    ref_freq_mhz: float = 900.0
    freq_exponent: float = 1.0
    extent_cm: Optional[ExtentModel] = None


def _air_background() -> "SlabModel":
    return SlabModel(material="air", rel_permittivity=1.0, atten_db_per_m=0.0)


class MediumModel(BaseModel):
    background: SlabModel = Field(default_factory=_air_background)
    slabs: List[SlabModel] = Field(default_factory=list)


class DiodeModelSchema(BaseModel):
    a2: float = 0.1
    a3: float = 0.05
    reradiation_loss_db: float = 10.0


class DeviceModel(BaseModel):
    position_cm: Tuple[float, float, float]
    diode: DiodeModelSchema = Field(default_factory=DiodeModelSchema)
    phase_offset_low_rad: float = 0.0
    phase_offset_high_rad: float = 0.0


class ToneModel(BaseModel):
    frequency_mhz: float
    amplitude: float
    phase_rad: float = 0.0


class CarriersModel(BaseModel):
    f1: float
    f2: float


class ScenarioModel(BaseModel):
    """Mirror of the scenario JSON document (schema version 1)."""

    schema_version: int = Field(default=SCENARIO_SCHEMA, alias="schema")
    name: str = ""
    seed: int = 0
    carriers_mhz: CarriersModel
    noise_psd_db_per_hz: Optional[float] = None
    antennas: List[AntennaModel]
    medium: MediumModel = Field(default_factory=MediumModel)
    device: Optional[DeviceModel] = None
    interference: List[ToneModel] = Field(default_factory=list)

    model_config = {"populate_by_name": True}

    def to_scenario(self) -> Scenario:
        return scenario_from_dict(self.model_dump(by_alias=True))

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "ScenarioModel":
        return cls.model_validate(scenario_to_dict(scenario))


class BoxModel(BaseModel):
    min: Tuple[float, float, float]
    max: Tuple[float, float, float]

    def to_box(self) -> Box:
        return Box(tuple(self.min), tuple(self.max))


class LocalizerParamsModel(BaseModel):
    learn_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iters: int = 5000
    grad_step: float = 1e-5
    tol_grad: float = 1e-9
    start_spacing: float = 0.05
    refine_top_k: Optional[int] = None
    offset_damping: float = 1e-3
    prune_after: int = 300
    prune_keep: int = 32
    stall_step: float = 1e-7
    stall_patience: int = 25


def encode_samples(samples: np.ndarray) -> str:
    """Interleaved little-endian float32 IQ, base64 encoded."""
    return base64.b64encode(np.asarray(samples, dtype="<c8").tobytes()).decode("ascii")


def decode_samples(data_b64: str) -> np.ndarray:
    raw = base64.b64decode(data_b64.encode("ascii"))
    return np.frombuffer(raw, dtype="<c8").astype(np.complex64)


class CaptureModel(BaseModel):
    rx_id: str = ""
    harmonic_label: str = ""
    center_frequency_hz: float
    sample_rate_hz: float
    rx_gain_db: float = 0.0
    scenario_hash: str = ""
    seed: int = 0
    n_samples: int = 0
    data_b64: str

    @classmethod
    def from_capture(cls, capture: IqCapture, harmonic_label: str = "") -> "CaptureModel":
        return cls(
            rx_id=capture.meta.rx_id,
            harmonic_label=harmonic_label or capture.meta.harmonic_label,
            center_frequency_hz=capture.center_frequency_hz,
            sample_rate_hz=capture.sample_rate_hz,
            rx_gain_db=capture.meta.rx_gain_db,
            scenario_hash=capture.meta.scenario_hash,
            seed=capture.meta.seed,
            n_samples=capture.n,
            data_b64=encode_samples(capture.samples),
        )

    def to_capture(self) -> IqCapture:
        from ..model import CaptureMeta

        return IqCapture(
            samples=decode_samples(self.data_b64),
            sample_rate_hz=self.sample_rate_hz,
            center_frequency_hz=self.center_frequency_hz,
            meta=CaptureMeta(
                rx_id=self.rx_id,
                rx_gain_db=self.rx_gain_db,
                scenario_hash=self.scenario_hash,
                seed=self.seed,
                harmonic_label=self.harmonic_label,
            ),
        )


class ScenarioRef(BaseModel):
    """Inline scenario document or the name of a shipped preset."""

    scenario: Optional[ScenarioModel] = None
    preset: Optional[str] = None
    noise_psd_db: Optional[float] = None
    disable_noise: bool = False
    seed: Optional[int] = None


class SimulateRequest(ScenarioRef):
    duration_s: float = 0.02
    sample_rate_hz: float = 1e6
    tone_offset_hz: float = 100e3
    rx_ids: Optional[List[str]] = None
    include_baseline: bool = False


class SimulateResponse(BaseModel):
    scenario_name: str
    scenario_hash: str
    captures: List[CaptureModel]
    baseline_captures: List[CaptureModel] = Field(default_factory=list)


class AnalyzeRequest(BaseModel):
    captures: List[CaptureModel]
    baseline_captures: List[CaptureModel] = Field(default_factory=list)
    fft_size: int = 4096
    tone_offset_hz: float = 100e3
    include_psd_plot: bool = False


class AnalyzeRow(BaseModel):
    rx_id: str
    harmonic_label: str = ""
    center_frequency_hz: float
    tone_frequency_hz: float
    peak_db: float
    snr_db: Optional[float] = None
    relative_gain_db: Optional[float] = None


class AnalyzeResponse(BaseModel):
    rows: List[AnalyzeRow]
    csv: str = ""
    svg: str = ""


class LocalizeRequest(ScenarioRef):
    captures: List[CaptureModel]
    search_box: Optional[BoxModel] = None
    params: Optional[LocalizerParamsModel] = None
    tone_offset_hz: float = 100e3


class LocalizeResponse(BaseModel):
    position_cm: Tuple[float, float, float]
    objective: float
    iterations: int
    converged: bool
    starts_evaluated: int
    phase_offsets_rad: Tuple[float, float]
    error_cm: Optional[float] = None


class SweepRequest(ScenarioRef):
    axis: str
    values: List[float]
    duration_s: float = 0.02
    sample_rate_hz: float = 1e6
    tone_offset_hz: float = 100e3
    fft_size: int = 4096


class SweepRowModel(BaseModel):
    value: float
    gains_db: Dict[str, float] = Field(default_factory=dict)
    snrs_db: Dict[str, Optional[float]] = Field(default_factory=dict)
    total_gain_db: Optional[float] = None
    below_detectability: bool = False
    is_best: bool = False
    error: Optional[str] = None


class SweepResponse(BaseModel):
    axis: str
    rows: List[SweepRowModel]
    best_value: Optional[float] = None
    best_position_cm: Optional[Tuple[float, float, float]] = None
    csv: str = ""
    svg: str = ""
    row_failures: int = 0


class MonteCarloRequest(ScenarioRef):
    n_trials: int = 10
    noise_levels: List[Optional[float]] = Field(default_factory=lambda: [None])
    rx_subsets: List[List[str]]
    device_zone: Optional[BoxModel] = None
    search_box: Optional[BoxModel] = None
    duration_s: float = 64e-6
    sample_rate_hz: float = 1e6
    tone_offset_hz: float = 100e3
    params: Optional[LocalizerParamsModel] = None


class TrialRowModel(BaseModel):
    noise_psd_db: Optional[float]
    subset: str
    trial: int
    true_position_cm: Tuple[float, float, float]
    error_cm: Optional[float] = None
    dx_cm: Optional[float] = None
    dy_cm: Optional[float] = None
    dz_cm: Optional[float] = None
    status: str = "ok"


class SummaryRowModel(BaseModel):
    noise_psd_db: Optional[float]
    subset: str
    n_ok: int
    n_failed: int
    median_cm: Optional[float] = None
    p90_cm: Optional[float] = None
    y_dominant_fraction: Optional[float] = None


class MonteCarloResponse(BaseModel):
    trials: List[TrialRowModel]
    summaries: List[SummaryRowModel]
    trials_csv: str = ""
    summary_csv: str = ""
    svg: str = ""
    row_failures: int = 0


class ErrorResponse(BaseModel):
    error: str
    detail: str
