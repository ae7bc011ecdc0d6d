"""Straight-ray propagation through layered dielectrics.

Paths are traced as straight segments (refraction at slab faces is ignored;
the bench geometries keep incidence near normal). Each traversed slab
contributes length * sqrt(rel_permittivity) to the effective electrical
distance and length * attenuation(f) to the loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePath, ScenarioError
from .model import (
    SPEED_OF_LIGHT,
    TWO_PI,
    AntennaSpec,
    MediumStack,
    Position,
    TissueSlab,
    wrap_two_pi,
)

_T_EPS = 1e-12


@dataclass(frozen=True)
class PathSegment:
    """A run of the ray through one material."""

    length: float
    slab: TissueSlab


@dataclass(frozen=True)
class PathSegments:
    """Ordered material runs from source to destination."""

    segments: tuple[PathSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def length(self) -> float:
        """Total geometric length in meters."""
        return sum(s.length for s in self.segments)


def _clip_segment_to_box(a: np.ndarray, d: np.ndarray, box) -> tuple[float, float] | None:
    """Parametric [t0, t1] of a + t*d inside the box for t in [0, 1], or None."""
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        lo, hi = box.min_corner[axis], box.max_corner[axis]
        if abs(d[axis]) < 1e-300:
            if not (lo <= a[axis] <= hi):
                return None
            continue
        ta = (lo - a[axis]) / d[axis]
        tb = (hi - a[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return (t0, t1)


def trace_path(medium: MediumStack, a: Position, b: Position) -> PathSegments:
    """Split the straight segment a -> b into per-material runs.

    Runs are labeled by the material at each run's midpoint, so points
    exactly on a face inherit the medium's first-match rule. Segment
    lengths sum to the geometric distance.
    """
    av, bv = a.as_array(), b.as_array()
    d = bv - av
    total = float(np.linalg.norm(d))
    if total == 0.0:
        raise DegeneratePath(f"path endpoints coincide at {a}")

    ts = {0.0, 1.0}
    for slab in medium.slabs:
        hit = _clip_segment_to_box(av, d, slab.extent)
        if hit is None:
            continue
        for t in hit:
            if _T_EPS < t < 1.0 - _T_EPS:
                ts.add(t)
    bounds = sorted(ts)

    segments: list[PathSegment] = []
    for t0, t1 in zip(bounds[:-1], bounds[1:]):
        if t1 - t0 <= _T_EPS:
            continue
        mid = av + 0.5 * (t0 + t1) * d
        slab = medium.material_at(Position(*mid))
        length = (t1 - t0) * total
        if segments and segments[-1].slab is slab:
            segments[-1] = PathSegment(segments[-1].length + length, slab)
        else:
            segments.append(PathSegment(length, slab))
    return PathSegments(tuple(segments))


def effective_distance(path: PathSegments) -> float:
    """Electrical path length: sum of length * sqrt(rel_permittivity)."""
    return sum(s.length * math.sqrt(s.slab.rel_permittivity) for s in path.segments)


def path_phase(frequency_hz: float, effective_distance_m: float) -> float:
    """One-way propagation phase in [0, 2*pi)."""
    if frequency_hz <= 0:
        raise ScenarioError("frequency must be positive")
    if effective_distance_m < 0:
        raise ScenarioError("effective distance must be nonnegative")
    return wrap_two_pi(TWO_PI * frequency_hz * effective_distance_m / SPEED_OF_LIGHT)


def path_attenuation_db(path: PathSegments, frequency_hz: float) -> float:
    """Material absorption plus free-space spreading, clamped to >= 0 dB."""
    if frequency_hz <= 0:
        raise ScenarioError("frequency must be positive")
    tissue = sum(s.length * s.slab.attenuation_at(frequency_hz) for s in path.segments)
    spreading = 20.0 * math.log10(
        4.0 * math.pi * path.length * frequency_hz / SPEED_OF_LIGHT
    )
    return max(0.0, tissue + spreading)


def pattern_gain_db(antenna: AntennaSpec, toward: Position) -> float:
    """Directional gain of the antenna toward a point, in dB.

    Omni patterns return 0. Horns fall off as -12*(theta/beamwidth)^2 with
    theta in degrees off boresight, floored at -30 dB.
    """
    if antenna.pattern.kind == "omni":
        return 0.0
    d = toward.as_array() - antenna.position.as_array()
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise DegeneratePath("cannot evaluate pattern toward the antenna's own position")
    bs = np.asarray(antenna.pattern.boresight, dtype=float)
    bs /= np.linalg.norm(bs)
    cosang = float(np.clip(np.dot(d / norm, bs), -1.0, 1.0))
    theta_deg = math.degrees(math.acos(cosang))
    gain = -12.0 * (theta_deg / antenna.pattern.beamwidth_deg) ** 2
    return max(-30.0, gain)
