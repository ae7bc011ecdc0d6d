"""Nonlinear mixing at the embedded diode.

The device is driven by two incident carriers and re-radiates the second and
third order intermodulation products. With incident tones
A1*cos(w1 t + p1) and A2*cos(w2 t + p2) run through a2*x^2 + a3*x^3, the
products of interest are:

    f1 + f2     amplitude a2 * A1 * A2          phase p1 + p2
    2*f1 - f2   amplitude (3/4) * a3 * A1^2 * A2  phase 2*p1 - p2

Reradiation loss is applied to both product amplitudes on the way out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ScenarioError


@dataclass(frozen=True)
class DiodeModel:
    """Polynomial nonlinearity coefficients and reradiation efficiency."""

    a2: float = 0.1
    a3: float = 0.05
    reradiation_loss_db: float = 10.0

    def __post_init__(self):
        if self.reradiation_loss_db < 0:
            raise ScenarioError("reradiation loss must be nonnegative dB")


@dataclass(frozen=True)
class IncidentTone:
    """One carrier as seen at the device: linear amplitude and phase."""

    amplitude: float
    phase_rad: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ScenarioError("incident amplitude must be nonnegative")


@dataclass(frozen=True)
class MixProduct:
    """One re-radiated intermodulation tone at the device terminals."""

    amplitude: float
    phase_rad: float


def mix(diode: DiodeModel, tone1: IncidentTone, tone2: IncidentTone) -> dict[str, MixProduct]:
    """Products re-radiated by the device, keyed 'h_low' (2f1-f2) and 'h_high' (f1+f2).

    Phases are raw accumulations (not wrapped); amplitudes include the
    reradiation loss.
    """
    rerad = 10.0 ** (-diode.reradiation_loss_db / 20.0)
    a_high = abs(diode.a2) * tone1.amplitude * tone2.amplitude * rerad
    a_low = 0.75 * abs(diode.a3) * tone1.amplitude ** 2 * tone2.amplitude * rerad
    # A negative polynomial coefficient flips the product's sign, which is a
    # pi phase shift on the radiated tone.
    p_high = tone1.phase_rad + tone2.phase_rad + (math.pi if diode.a2 < 0 else 0.0)
    p_low = 2.0 * tone1.phase_rad - tone2.phase_rad + (math.pi if diode.a3 < 0 else 0.0)
    return {
        "h_low": MixProduct(amplitude=a_low, phase_rad=p_low),
        "h_high": MixProduct(amplitude=a_high, phase_rad=p_high),
    }
