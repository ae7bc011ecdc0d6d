"""Diode mixing products checked against a brute-force FFT of the polynomial."""

import math

import numpy as np
import pytest

from harmoloc import DiodeModel, mix
from harmoloc.backscatter import IncidentTone
from harmoloc.errors import ScenarioError
from harmoloc.model import wrap_pm_pi

N_FFT = 4096
K1, K2 = 50, 41  # carrier bins; chosen so no two polynomial products collide


def fft_products(diode, tone1, tone2):
    """Time-domain polynomial through an FFT, no mixing algebra.

    Returns {'h_low': (amp, phase), 'h_high': (amp, phase)} read straight off
    the spectrum bins at 2*k1 - k2 and k1 + k2, including reradiation loss.
    """
    t = np.arange(N_FFT) / N_FFT
    x = (tone1.amplitude * np.cos(2 * np.pi * K1 * t + tone1.phase_rad)
         + tone2.amplitude * np.cos(2 * np.pi * K2 * t + tone2.phase_rad))
    y = diode.a2 * x ** 2 + diode.a3 * x ** 3
    spec = np.fft.fft(y) / N_FFT
    rerad = 10.0 ** (-diode.reradiation_loss_db / 20.0)
    out = {}
    for label, bin_index in (("h_low", 2 * K1 - K2), ("h_high", K1 + K2)):
        z = spec[bin_index]
        out[label] = (2.0 * abs(z) * rerad, float(np.angle(z)))
    return out


def assert_matches_fft(diode, tone1, tone2, tol=1e-6):
    got = mix(diode, tone1, tone2)
    want = fft_products(diode, tone1, tone2)
    for label in ("h_low", "h_high"):
        amp_w, phase_w = want[label]
        amp_g = got[label].amplitude
        assert abs(amp_g - amp_w) <= tol * max(1.0, amp_w), (
            f"{label} amplitude {amp_g} vs fft {amp_w}")
        if amp_w > 1e-12:
            dphi = wrap_pm_pi(got[label].phase_rad - phase_w)
            assert abs(dphi) <= tol, f"{label} phase off by {dphi}"


def test_mix_unit_coefficients():
    diode = DiodeModel(a2=1.0, a3=1.0, reradiation_loss_db=0.0)
    t1 = IncidentTone(amplitude=1.0, phase_rad=0.0)
    t2 = IncidentTone(amplitude=1.0, phase_rad=0.0)
    out = mix(diode, t1, t2)
    assert abs(out["h_high"].amplitude - 1.0) < 1e-12
    assert abs(out["h_low"].amplitude - 0.75) < 1e-12
    assert out["h_high"].phase_rad == 0.0
    assert out["h_low"].phase_rad == 0.0


def test_mix_phase_composition():
    diode = DiodeModel(a2=0.1, a3=0.05, reradiation_loss_db=0.0)
    t1 = IncidentTone(amplitude=1.0, phase_rad=math.pi / 2)
    t2 = IncidentTone(amplitude=1.0, phase_rad=0.0)
    out = mix(diode, t1, t2)
    assert abs(out["h_high"].phase_rad - math.pi / 2) < 1e-12
    assert abs(out["h_low"].phase_rad - math.pi) < 1e-12


def test_mix_reradiation_loss():
    t1 = IncidentTone(amplitude=1.0, phase_rad=0.3)
    t2 = IncidentTone(amplitude=0.5, phase_rad=1.1)
    lossless = mix(DiodeModel(a2=0.1, a3=0.05, reradiation_loss_db=0.0), t1, t2)
    lossy = mix(DiodeModel(a2=0.1, a3=0.05, reradiation_loss_db=20.0), t1, t2)
    for label in ("h_low", "h_high"):
        assert abs(lossy[label].amplitude - 0.1 * lossless[label].amplitude) < 1e-12
        assert lossy[label].phase_rad == lossless[label].phase_rad


def test_mix_zero_second_tone_kills_both_products():
    diode = DiodeModel()
    out = mix(diode, IncidentTone(1.0, 0.2), IncidentTone(0.0, 0.9))
    assert out["h_low"].amplitude == 0.0
    assert out["h_high"].amplitude == 0.0


def test_mix_amplitude_scaling_laws():
    diode = DiodeModel(a2=0.1, a3=0.05, reradiation_loss_db=10.0)
    t2 = IncidentTone(amplitude=0.7, phase_rad=0.4)
    base = mix(diode, IncidentTone(0.3, 1.0), t2)
    doubled = mix(diode, IncidentTone(0.6, 1.0), t2)
    # first carrier enters squared in the odd product, linearly in the sum
    assert abs(doubled["h_low"].amplitude - 4.0 * base["h_low"].amplitude) < 1e-12
    assert abs(doubled["h_high"].amplitude - 2.0 * base["h_high"].amplitude) < 1e-12
    # second carrier enters both linearly
    t2x = mix(diode, IncidentTone(0.3, 1.0), IncidentTone(1.4, 0.4))
    assert abs(t2x["h_low"].amplitude - 2.0 * base["h_low"].amplitude) < 1e-12
    assert abs(t2x["h_high"].amplitude - 2.0 * base["h_high"].amplitude) < 1e-12


def test_mix_negative_coefficients_flip_phase():
    t1 = IncidentTone(1.0, 0.2)
    t2 = IncidentTone(1.0, 0.5)
    pos = mix(DiodeModel(a2=0.1, a3=0.05, reradiation_loss_db=0.0), t1, t2)
    neg = mix(DiodeModel(a2=-0.1, a3=-0.05, reradiation_loss_db=0.0), t1, t2)
    for label in ("h_low", "h_high"):
        assert abs(neg[label].amplitude - pos[label].amplitude) < 1e-12
        assert abs(wrap_pm_pi(neg[label].phase_rad - pos[label].phase_rad) - math.pi) < 1e-12 or \
            abs(wrap_pm_pi(neg[label].phase_rad - pos[label].phase_rad) + math.pi) < 1e-12


def test_mix_against_fft_oracle_random_draws():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        diode = DiodeModel(
            a2=float(rng.uniform(0.01, 1.0) * rng.choice([-1.0, 1.0])),
            a3=float(rng.uniform(0.01, 1.0) * rng.choice([-1.0, 1.0])),
            reradiation_loss_db=float(rng.uniform(0.0, 30.0)),
        )
        t1 = IncidentTone(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.0, 2 * np.pi)))
        t2 = IncidentTone(float(rng.uniform(0.1, 2.0)), float(rng.uniform(0.0, 2 * np.pi)))
        assert_matches_fft(diode, t1, t2)


def test_diode_validation():
    with pytest.raises(ScenarioError):
        DiodeModel(reradiation_loss_db=-3.0)
    with pytest.raises(ScenarioError):
        IncidentTone(amplitude=-0.1, phase_rad=0.0)
