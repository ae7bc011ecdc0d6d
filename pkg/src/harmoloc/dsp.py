"""Spectral analysis of complex baseband captures.

PSDs are amplitude-normalized: a full-scale complex tone centered on a bin
reads 0 dB regardless of fft size, which makes peak levels directly
comparable across configurations. Values are per-bin power in dB, not
spectral density per Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CaptureTooShort,
    FrequencyOutOfSpan,
    IncompatiblePsds,
    InsufficientSignal,
    ScenarioError,
)
from .model import IqCapture, wrap_two_pi

_WINDOWS = ("hann", "rect")


@dataclass(frozen=True)
class TonePhasor:
    """One tone's estimated absolute frequency, amplitude, phase and SNR."""

    frequency_hz: float
    amplitude: float
    phase_rad: float
    snr_db: float = math.inf


@dataclass(frozen=True)
class PsdEstimate:
    """Averaged periodogram with its analysis settings."""

    frequencies_hz: np.ndarray
    power_db: np.ndarray
    fft_size: int
    window: str
    segment_count: int
    sample_rate_hz: float
    center_frequency_hz: float

    @property
    def resolution_hz(self) -> float:
        return self.sample_rate_hz / self.fft_size


@dataclass(frozen=True)
class Spectrogram:
    """Per-segment spectra over time; rows are segments."""

    frequencies_hz: np.ndarray
    times_s: np.ndarray
    power_db: np.ndarray  # shape (n_segments, fft_size)
    fft_size: int
    window: str


@dataclass(frozen=True)
class PeakPower:
    """A located spectral peak."""

    power_db: float
    bin_index: int
    frequency_hz: float


def _make_window(window: str, n: int) -> np.ndarray:
    if window == "hann":
        return np.hanning(n)
    if window == "rect":
        return np.ones(n)
    raise ScenarioError(f"unknown window {window!r}, expected one of {_WINDOWS}")


def _segment_powers(
    capture: IqCapture, fft_size: int, hop: int, window: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(start_indices, frequencies, per-segment linear power), fftshifted."""
    x = np.asarray(capture.samples, dtype=np.complex128)
    n = x.shape[0]
    if fft_size < 16:
        raise ScenarioError(f"fft_size must be at least 16, got {fft_size}")
    if fft_size & (fft_size - 1):
        raise ScenarioError(f"fft_size must be a power of two, got {fft_size}")
    if n < fft_size:
        raise CaptureTooShort(
            f"capture has {n} samples, need at least fft_size={fft_size}"
        )
    if hop < 1:
        raise ScenarioError("segment hop must be at least 1 sample")
    w = _make_window(window, fft_size)
    scale = np.sum(w) ** 2
    starts = np.arange(0, n - fft_size + 1, hop)
    spectra = np.empty((starts.size, fft_size), dtype=float)
    for i, s in enumerate(starts):
        seg = x[s : s + fft_size] * w
        spectra[i] = np.abs(np.fft.fft(seg)) ** 2 / scale
    spectra = np.fft.fftshift(spectra, axes=1)
    freqs = capture.center_frequency_hz + np.fft.fftshift(
        np.fft.fftfreq(fft_size, d=1.0 / capture.sample_rate_hz)
    )
    return starts, freqs, spectra


def _to_db(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p)


def welch_psd(
    capture: IqCapture,
    fft_size: int = 4096,
    overlap: float = 0.5,
    window: str = "hann",
) -> PsdEstimate:
    """Segment-averaged power spectrum of a capture.

    Segments overlap by the given fraction; partial trailing segments are
    dropped. Bins with exactly zero power come out as -inf dB.
    """
    if not 0.0 <= overlap < 1.0:
        raise ScenarioError(f"overlap must be in [0, 1), got {overlap}")
    hop = max(1, int(round(fft_size * (1.0 - overlap))))
    starts, freqs, spectra = _segment_powers(capture, fft_size, hop, window)
    mean_power = spectra.mean(axis=0)
    return PsdEstimate(
        frequencies_hz=freqs,
        power_db=_to_db(mean_power),
        fft_size=fft_size,
        window=window,
        segment_count=int(starts.size),
        sample_rate_hz=capture.sample_rate_hz,
        center_frequency_hz=capture.center_frequency_hz,
    )


def spectrogram(
    capture: IqCapture,
    fft_size: int = 1024,
    hop: int | None = None,
    window: str = "hann",
) -> Spectrogram:
    """Time-frequency matrix using the same normalization as welch_psd."""
    if hop is None:
        hop = fft_size // 2
    starts, freqs, spectra = _segment_powers(capture, fft_size, hop, window)
    times = (starts + fft_size / 2.0) / capture.sample_rate_hz
    return Spectrogram(
        frequencies_hz=freqs,
        times_s=times,
        power_db=_to_db(spectra),
        fft_size=fft_size,
        window=window,
    )


def peak_power_db(psd: PsdEstimate, frequency_hz: float, search_bins: int = 3) -> PeakPower:
    """Strongest bin within +/- search_bins of the bin nearest frequency_hz."""
    freqs = psd.frequencies_hz
    if not freqs[0] <= frequency_hz <= freqs[-1]:
        raise FrequencyOutOfSpan(
            f"{frequency_hz} Hz outside analyzed span "
            f"[{freqs[0]}, {freqs[-1]}] Hz"
        )
    if search_bins < 0:
        raise ScenarioError("search_bins must be nonnegative")
    center = int(np.argmin(np.abs(freqs - frequency_hz)))
    lo = max(0, center - search_bins)
    hi = min(freqs.size, center + search_bins + 1)
    k = lo + int(np.argmax(psd.power_db[lo:hi]))
    return PeakPower(
        power_db=float(psd.power_db[k]),
        bin_index=k,
        frequency_hz=float(freqs[k]),
    )


def relative_gain_db(
    with_device: PsdEstimate,
    without_device: PsdEstimate,
    frequency_hz: float,
    search_bins: int = 3,
) -> float:
    """Peak level difference (with - without) at a frequency, in dB."""
    same = (
        with_device.center_frequency_hz == without_device.center_frequency_hz
        and with_device.sample_rate_hz == without_device.sample_rate_hz
        and with_device.fft_size == without_device.fft_size
    )
    if not same:
        raise IncompatiblePsds(
            "PSDs must share center frequency, sample rate and fft_size"
        )
    p_with = peak_power_db(with_device, frequency_hz, search_bins)
    p_without = peak_power_db(without_device, frequency_hz, search_bins)
    return p_with.power_db - p_without.power_db


def extract_tone_phasor(
    capture: IqCapture,
    offset_hz: float,
    snr_floor_db: float = -10.0,
) -> TonePhasor:
    """Correlate the capture against a known baseband offset tone.

    Returns the complex amplitude of the tone at center + offset along with
    an SNR estimate against everything else in the capture. Raises
    InsufficientSignal when the estimate would be junk.
    """
    x = np.asarray(capture.samples, dtype=np.complex128)
    n = x.shape[0]
    if n < 16:
        raise CaptureTooShort(f"need at least 16 samples, got {n}")
    if abs(offset_hz) >= capture.sample_rate_hz / 2.0:
        raise FrequencyOutOfSpan(
            f"offset {offset_hz} Hz is at or beyond Nyquist "
            f"({capture.sample_rate_hz / 2.0} Hz)"
        )
    idx = np.arange(n)
    ref = np.exp(-2j * np.pi * offset_hz * idx / capture.sample_rate_hz)
    z = complex(np.mean(x * ref))
    residual = x - z * np.conj(ref)
    noise_power = float(np.mean(np.abs(residual) ** 2))
    sig_power = abs(z) ** 2
    if noise_power == 0.0:
        snr_db = math.inf if sig_power > 0 else -math.inf
    elif sig_power == 0.0:
        snr_db = -math.inf
    else:
        snr_db = 10.0 * math.log10(sig_power / noise_power)
    if snr_db < snr_floor_db:
        raise InsufficientSignal(
            f"tone at offset {offset_hz} Hz: snr {snr_db:.2f} dB below "
            f"floor {snr_floor_db:.2f} dB"
        )
    return TonePhasor(
        frequency_hz=capture.center_frequency_hz + offset_hz,
        amplitude=abs(z),
        phase_rad=wrap_two_pi(float(np.angle(z))),
        snr_db=snr_db,
    )
