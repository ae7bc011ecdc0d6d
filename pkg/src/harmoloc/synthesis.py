"""Capture synthesis: from a scenario to complex baseband samples on disk.

Each (receiver, harmonic) pair gets its own capture, centered so the
harmonic lands at a configurable baseband offset. Noise streams are keyed
by (scenario seed, receiver id, harmonic), so captures are reproducible
regardless of generation order, and paired with/without-device captures
share identical noise.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backscatter import IncidentTone, MixProduct, mix
from .dsp import TonePhasor
from .errors import (
    AliasedTone,
    EmptyCapture,
    MissingSidecar,
    ScenarioError,
    SchemaMismatch,
    TruncatedFile,
)
from .model import (
    TWO_PI,
    AntennaSpec,
    CaptureMeta,
    HARMONIC_LABELS,
    IqCapture,
    MediumStack,
    Position,
    Scenario,
    db_to_amplitude,
    scenario_hash,
    wrap_two_pi,
)
from .propagation import (
    effective_distance,
    path_attenuation_db,
    path_phase,
    pattern_gain_db,
    trace_path,
)

CAPTURE_SCHEMA = 1
MIN_CAPTURE_SAMPLES = 16


def incident_tone(
    medium: MediumStack, tx: AntennaSpec, point: Position, frequency_hz: float
) -> IncidentTone:
    """Carrier amplitude and phase arriving at a point from one transmitter."""
    path = trace_path(medium, tx.position, point)
    gain_db = tx.chain_gain_db + pattern_gain_db(tx, point) - path_attenuation_db(path, frequency_hz)
    return IncidentTone(
        amplitude=tx.drive_amplitude * db_to_amplitude(gain_db),
        phase_rad=path_phase(frequency_hz, effective_distance(path)),
    )


def _uplink(
    medium: MediumStack, device_pos: Position, rx: AntennaSpec, frequency_hz: float
) -> tuple[float, float]:
    """(amplitude factor, phase) for the device-to-receiver leg."""
    path = trace_path(medium, device_pos, rx.position)
    gain_db = rx.chain_gain_db + pattern_gain_db(rx, device_pos) - path_attenuation_db(path, frequency_hz)
    return db_to_amplitude(gain_db), path_phase(frequency_hz, effective_distance(path))


@dataclass(frozen=True)
class DeviceToneSet:
    """Ground-truth harmonic tones at every receiver."""

    h_low_hz: float
    h_high_hz: float
    tones: dict  # (rx_id, label) -> TonePhasor

    def get(self, rx_id: str, label: str) -> TonePhasor:
        return self.tones[(rx_id, label)]

    def harmonic_hz(self, label: str) -> float:
        return self.h_low_hz if label == "h_low" else self.h_high_hz


def device_tone_set(scenario: Scenario) -> DeviceToneSet:
    """What each receiver hears from the device, per harmonic.

    Phase composition per tone: mixing-product phase (built from the two
    downlink carrier phases), plus the uplink propagation phase at the
    harmonic, plus the device's static phase offset, wrapped to [0, 2*pi).
    """
    if scenario.device is None:
        raise ScenarioError("scenario has no device; no tones to compute")
    dev = scenario.device
    h_low, h_high = scenario.harmonics()
    t1 = incident_tone(scenario.medium, scenario.tx1, dev.position, scenario.f1_hz)
    t2 = incident_tone(scenario.medium, scenario.tx2, dev.position, scenario.f2_hz)
    products: dict[str, MixProduct] = mix(dev.diode, t1, t2)
    tones: dict[tuple[str, str], TonePhasor] = {}
    for rx in scenario.receivers:
        for label, harmonic in (("h_low", h_low), ("h_high", h_high)):
            up_amp, up_phase = _uplink(scenario.medium, dev.position, rx, harmonic)
            prod = products[label]
            tones[(rx.id, label)] = TonePhasor(
                frequency_hz=harmonic,
                amplitude=prod.amplitude * up_amp,
                phase_rad=wrap_two_pi(prod.phase_rad + up_phase + dev.phase_offset(label)),
            )
    return DeviceToneSet(h_low_hz=h_low, h_high_hz=h_high, tones=tones)


def _noise_rng(scenario: Scenario, rx_id: str, harmonic_hz: float) -> np.random.Generator:
    key = [
        int(scenario.seed),
        zlib.crc32(rx_id.encode("utf-8")),
        int(round(harmonic_hz)),
    ]
    return np.random.default_rng(np.random.SeedSequence(key))


def _resolve_label(scenario: Scenario, harmonic) -> str:
    if isinstance(harmonic, str):
        if harmonic not in HARMONIC_LABELS:
            raise ScenarioError(f"unknown harmonic label {harmonic!r}")
        return harmonic
    h_low, h_high = scenario.harmonics()
    f = float(harmonic)
    for label, h in (("h_low", h_low), ("h_high", h_high)):
        if abs(f - h) <= 1e-6 * max(1.0, abs(h)):
            return label
    raise ScenarioError(
        f"{f} Hz is not one of this scenario's harmonics ({h_low}, {h_high})"
    )


def synthesize_capture(
    scenario: Scenario,
    rx_id: str,
    harmonic,
    duration_s: float,
    sample_rate_hz: float = 1e6,
    tone_offset_hz: float = 100e3,
) -> IqCapture:
    """Simulate one receiver capture around one harmonic.

    harmonic may be a label ('h_low'/'h_high') or the frequency in Hz.
    The capture is centered at harmonic - tone_offset so the device tone,
    when present, sits at +tone_offset in baseband. A scenario without a
    device yields the same noise and interference with no tone.
    """
    rx = scenario.antenna(rx_id)
    if rx.role != "rx":
        raise ScenarioError(f"antenna {rx_id!r} is not a receiver")
    label = _resolve_label(scenario, harmonic)
    harmonic_hz = scenario.harmonic_hz(label)
    if sample_rate_hz <= 0:
        raise ScenarioError("sample rate must be positive")
    if abs(tone_offset_hz) >= sample_rate_hz / 2.0:
        raise AliasedTone(
            f"tone offset {tone_offset_hz} Hz is at or beyond Nyquist "
            f"({sample_rate_hz / 2.0} Hz)"
        )
    n = int(round(duration_s * sample_rate_hz))
    if n < MIN_CAPTURE_SAMPLES:
        raise EmptyCapture(
            f"duration {duration_s} s at {sample_rate_hz} S/s gives {n} samples, "
            f"need at least {MIN_CAPTURE_SAMPLES}"
        )
    center_hz = harmonic_hz - tone_offset_hz
    t = np.arange(n) / sample_rate_hz

    samples = np.zeros(n, dtype=np.complex128)
    for tone in scenario.interference:
        off = tone.frequency_hz - center_hz
        if abs(off) >= sample_rate_hz / 2.0:
            continue  # out of this capture's span
        samples += tone.amplitude * np.exp(1j * (TWO_PI * off * t + tone.phase_rad))
    if scenario.noise_psd_db is not None:
        total_power = 10.0 ** (scenario.noise_psd_db / 10.0) * sample_rate_hz
        sigma = np.sqrt(total_power / 2.0)
        z = _noise_rng(scenario, rx_id, harmonic_hz).standard_normal((2, n))
        samples += sigma * (z[0] + 1j * z[1])
    if scenario.device is not None:
        truth = device_tone_set(scenario).get(rx_id, label)
        samples = samples + truth.amplitude * np.exp(
            1j * (TWO_PI * tone_offset_hz * t + truth.phase_rad)
        )

    return IqCapture(
        samples=samples,
        sample_rate_hz=sample_rate_hz,
        center_frequency_hz=center_hz,
        meta=CaptureMeta(
            rx_id=rx_id,
            rx_gain_db=rx.chain_gain_db,
            scenario_hash=scenario_hash(scenario),
            seed=scenario.seed,
            harmonic_label=label,
        ),
    )


def synthesize_all(
    scenario: Scenario,
    duration_s: float,
    sample_rate_hz: float = 1e6,
    tone_offset_hz: float = 100e3,
    rx_ids=None,
) -> dict:
    """Captures for every (receiver, harmonic), keyed (rx_id, label)."""
    if rx_ids is None:
        rx_ids = [rx.id for rx in scenario.receivers]
    out = {}
    for rx_id in rx_ids:
        for label in HARMONIC_LABELS:
            out[(rx_id, label)] = synthesize_capture(
                scenario, rx_id, label, duration_s, sample_rate_hz, tone_offset_hz
            )
    return out


# --- cf32 file format --------------------------------------------------------

def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def write_capture(capture: IqCapture, path) -> tuple[Path, Path]:
    """Write interleaved little-endian float32 IQ plus a JSON sidecar.

    Returns (data_path, sidecar_path). Samples are quantized to float32.
    """
    path = Path(path)
    data = np.asarray(capture.samples, dtype=np.complex64)
    if not np.all(np.isfinite(data.view(np.float32))):
        raise ScenarioError("refusing to write non-finite samples")
    raw = data.view(np.float32).astype("<f4")
    path.write_bytes(raw.tobytes())
    side = _sidecar_path(path)
    with open(side, "w", encoding="utf-8") as f:
        json.dump(sidecar_dict(capture), f, indent=2, sort_keys=True)
        f.write("\n")
    return path, side


def sidecar_dict(capture: IqCapture) -> dict:
    d = {
        "schema": CAPTURE_SCHEMA,
        "center_freq_hz": capture.center_frequency_hz,
        "sample_rate_hz": capture.sample_rate_hz,
        "rx_id": capture.meta.rx_id,
        "rx_gain_db": capture.meta.rx_gain_db,
        "scenario_hash": capture.meta.scenario_hash,
        "seed": capture.meta.seed,
    }
    if capture.meta.harmonic_label:
        d["harmonic_label"] = capture.meta.harmonic_label
    return d


def capture_from_sidecar(d: dict, samples: np.ndarray) -> IqCapture:
    if not isinstance(d, dict) or d.get("schema") != CAPTURE_SCHEMA:
        raise SchemaMismatch(
            f"unsupported capture schema {d.get('schema') if isinstance(d, dict) else d!r}"
        )
    try:
        return IqCapture(
            samples=samples,
            sample_rate_hz=float(d["sample_rate_hz"]),
            center_frequency_hz=float(d["center_freq_hz"]),
            meta=CaptureMeta(
                rx_id=str(d["rx_id"]),
                rx_gain_db=float(d["rx_gain_db"]),
                scenario_hash=str(d["scenario_hash"]),
                seed=int(d["seed"]),
                harmonic_label=str(d.get("harmonic_label", "")),
            ),
        )
    except KeyError as e:
        raise SchemaMismatch(f"capture sidecar missing field {e}") from e


def read_capture(path) -> IqCapture:
    """Read a .cf32 file and its sidecar back into an IqCapture."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) % 8 != 0:
        raise TruncatedFile(
            f"{path} holds {len(raw)} bytes, not a whole number of complex64 samples"
        )
    side = _sidecar_path(path)
    if not side.exists():
        raise MissingSidecar(f"no sidecar {side} next to {path}")
    with open(side, "r", encoding="utf-8") as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise SchemaMismatch(f"capture sidecar is not valid JSON: {e}") from e
    samples = np.frombuffer(raw, dtype="<f4").astype(np.float32).view(np.complex64)
    return capture_from_sidecar(d, samples)
