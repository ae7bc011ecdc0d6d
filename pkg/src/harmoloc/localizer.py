"""Position recovery from wrapped harmonic phase measurements.

The estimator state is a 5-vector (x, y, z, offset_low, offset_high): the
device position plus one unknown static phase offset per harmonic. The
objective is the sum of squared phase residuals wrapped to (-pi, pi],
minimized by Adam with central finite-difference gradients from a coarse
grid of starting positions. Phase wrapping makes the landscape multimodal,
hence the multi-start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import TonePhasor, extract_tone_phasor
from .errors import (
    InsufficientSignal,
    NoConvergedStart,
    NonFiniteObjective,
    NoUsableMeasurements,
    ScenarioError,
)
from .model import (
    SPEED_OF_LIGHT,
    TWO_PI,
    AntennaSpec,
    Box,
    HARMONIC_LABELS,
    MediumStack,
    Position,
    Scenario,
    harmonics_of,
    wrap_pm_pi,
    wrap_two_pi,
)
from .propagation import effective_distance, path_phase, trace_path

_MIX_COEFFS = {"h_low": (2.0, -1.0), "h_high": (1.0, 1.0)}


@dataclass(frozen=True)
class LocalizerParams:
    """Adam and multi-start settings. The estimated state itself is the
    5-vector (position xyz in meters, per-harmonic phase offsets in rad)."""

    learn_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_iters: int = 5000
    grad_step: float = 1e-5
    tol_grad: float = 1e-9
    start_spacing: float = 0.05
    refine_top_k: int | None = None
    # Quadratic damping on the two nuisance offsets during refinement.
    # Phase-only measurements constrain the device position plus free
    # per-harmonic offsets only up to a one-dimensional family of exact
    # fits (the offsets can absorb any common-mode phase change), so an
    # undamped search drifts along that valley. Damping makes the
    # zero-offset member of the family the unique optimum while perturbing
    # noisy fits by far less than the noise floor. Reported objectives
    # never include the damping term.
    offset_damping: float = 1e-3
    # After prune_after refinement iterations, only the prune_keep
    # best-scoring starts continue; the rest have settled into clearly
    # worse basins and further polishing cannot make them win. None
    # disables pruning.
    prune_after: int | None = 300
    prune_keep: int = 32
    # A start whose update steps stay below stall_step for stall_patience
    # consecutive iterations is treated as settled and stops early. Both
    # thresholds sit orders of magnitude below the millimeter regime the
    # estimator targets.
    stall_step: float = 1e-7
    stall_patience: int = 25

    def __post_init__(self):
        if self.learn_rate <= 0:
            raise ScenarioError("learn_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ScenarioError("beta1 and beta2 must lie in (0, 1)")
        if self.max_iters < 1:
            raise ScenarioError("max_iters must be at least 1")
        if self.grad_step <= 0:
            raise ScenarioError("grad_step must be positive")
        if self.start_spacing <= 0:
            raise ScenarioError("start_spacing must be positive")
        if self.refine_top_k is not None and self.refine_top_k < 1:
            raise ScenarioError("refine_top_k must be at least 1 when set")
        if self.offset_damping < 0:
            raise ScenarioError("offset_damping must be nonnegative")
        if self.prune_after is not None and self.prune_after < 1:
            raise ScenarioError("prune_after must be at least 1 when set")
        if self.prune_keep < 1:
            raise ScenarioError("prune_keep must be at least 1")


@dataclass(frozen=True)
class Measurement:
    """One (receiver, harmonic) phase observation."""

    rx_id: str
    label: str  # 'h_low' or 'h_high'
    harmonic_hz: float
    phasor: TonePhasor
    weight: float = 1.0


@dataclass(frozen=True)
class MeasurementSet:
    """Phase observations plus the geometry needed to model them."""

    f1_hz: float
    f2_hz: float
    geometry: tuple[AntennaSpec, ...]
    medium: MediumStack
    entries: tuple[Measurement, ...]

    def __post_init__(self):
        object.__setattr__(self, "geometry", tuple(self.geometry))
        object.__setattr__(self, "entries", tuple(self.entries))
        harmonics_of(self.f1_hz, self.f2_hz)
        if len(self.transmitters) < 2:
            raise ScenarioError("measurement set needs the two transmit antennas")
        by_id = {a.id: a for a in self.geometry}
        for e in self.entries:
            rx = by_id.get(e.rx_id)
            if rx is None or rx.role != "rx":
                raise ScenarioError(f"measurement rx_id {e.rx_id!r} is not a known receiver")
            if e.label not in HARMONIC_LABELS:
                raise ScenarioError(f"unknown harmonic label {e.label!r}")

    @property
    def transmitters(self) -> tuple[AntennaSpec, ...]:
        return tuple(a for a in self.geometry if a.role == "tx")

    def antenna(self, antenna_id: str) -> AntennaSpec:
        for a in self.geometry:
            if a.id == antenna_id:
                return a
        raise ScenarioError(f"no antenna with id {antenna_id!r}")


def measurement_set_from_captures(
    scenario: Scenario,
    captures,
    tone_offset_hz: float = 100e3,
    snr_floor_db: float = -10.0,
) -> MeasurementSet:
    """Extract phases from captures; entries below the SNR floor are dropped.

    captures may be a dict keyed (rx_id, label) or any iterable of IqCapture.
    The harmonic of each capture is inferred from center + tone offset.
    """
    if isinstance(captures, dict):
        captures = captures.values()
    h_low, h_high = scenario.harmonics()
    entries = []
    for cap in captures:
        harmonic = cap.center_frequency_hz + tone_offset_hz
        label = None
        for cand, h in (("h_low", h_low), ("h_high", h_high)):
            if abs(harmonic - h) <= 1e-6 * max(1.0, abs(h)):
                label = cand
                break
        if label is None:
            raise ScenarioError(
                f"capture centered at {cap.center_frequency_hz} Hz matches neither harmonic"
            )
        try:
            phasor = extract_tone_phasor(cap, tone_offset_hz, snr_floor_db)
        except InsufficientSignal:
            continue
        entries.append(
            Measurement(
                rx_id=cap.meta.rx_id,
                label=label,
                harmonic_hz=h_low if label == "h_low" else h_high,
                phasor=phasor,
            )
        )
    return MeasurementSet(
        f1_hz=scenario.f1_hz,
        f2_hz=scenario.f2_hz,
        geometry=scenario.antennas,
        medium=scenario.medium,
        entries=tuple(entries),
    )


def model_phase(
    geometry,
    medium: MediumStack,
    f1_hz: float,
    f2_hz: float,
    p: Position,
    harmonic: str,
    rx_id: str,
    phase_offset: float = 0.0,
) -> float:
    """Predicted received phase for one (receiver, harmonic), in [0, 2*pi).

    Composes the two downlink carrier phases through the mixing rule with the
    uplink phase at the harmonic, plus the per-harmonic static offset.
    """
    txs = [a for a in geometry if a.role == "tx"]
    if len(txs) < 2:
        raise ScenarioError("geometry needs two transmit antennas")
    rx = next((a for a in geometry if a.id == rx_id), None)
    if rx is None or rx.role != "rx":
        raise ScenarioError(f"rx_id {rx_id!r} is not a receiver in the geometry")
    if harmonic not in _MIX_COEFFS:
        raise ScenarioError(f"unknown harmonic label {harmonic!r}")
    h_low, h_high = harmonics_of(f1_hz, f2_hz)
    h_hz = h_low if harmonic == "h_low" else h_high
    c1, c2 = _MIX_COEFFS[harmonic]
    phi1 = path_phase(f1_hz, effective_distance(trace_path(medium, txs[0].position, p)))
    phi2 = path_phase(f2_hz, effective_distance(trace_path(medium, txs[1].position, p)))
    phi_up = path_phase(h_hz, effective_distance(trace_path(medium, p, rx.position)))
    return wrap_two_pi(c1 * phi1 + c2 * phi2 + phi_up + phase_offset)


def objective(ms: MeasurementSet, p: Position, offsets) -> float:
    """Sum of squared wrapped phase residuals at a candidate state."""
    off_low, off_high = float(offsets[0]), float(offsets[1])
    total = 0.0
    for e in ms.entries:
        off = off_low if e.label == "h_low" else off_high
        model = model_phase(
            ms.geometry, ms.medium, ms.f1_hz, ms.f2_hz, p, e.label, e.rx_id, off
        )
        r = wrap_pm_pi(e.phasor.phase_rad - model)
        total += e.weight * r * r
    return total


def objective_gradient(ms: MeasurementSet, theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of the objective at a 5-vector."""
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (
            objective(ms, Position(*up[:3]), up[3:5])
            - objective(ms, Position(*dn[:3]), dn[3:5])
        ) / (2.0 * step)
    return g


class BatchedObjective:
    """Vectorized objective over batches of 5-vectors.

    Effective distances are computed with an interval-overlap fast path that
    assumes slab interiors do not overlap (the preset media comply); results
    match the segment-tracing reference to float precision, verified in tests.
    """

    def __init__(self, ms: MeasurementSet, offset_damping: float = 0.0):
        self.ms = ms
        self.offset_damping = offset_damping
        txs = ms.transmitters
        self.tx1 = txs[0].position.as_array()
        self.tx2 = txs[1].position.as_array()
        self.k1 = TWO_PI * ms.f1_hz / SPEED_OF_LIGHT
        self.k2 = TWO_PI * ms.f2_hz / SPEED_OF_LIGHT
        # Distances are computed once per distinct receiver, then indexed
        # per entry; both harmonics of one receiver share the same leg.
        rx_index: dict[str, int] = {}
        rx_pos = []
        uplink_idx = []
        k_h = []
        c1 = []
        c2 = []
        off_idx = []
        meas = []
        weight = []
        for e in ms.entries:
            if e.rx_id not in rx_index:
                rx_index[e.rx_id] = len(rx_pos)
                rx_pos.append(ms.antenna(e.rx_id).position.as_array())
            uplink_idx.append(rx_index[e.rx_id])
            k_h.append(TWO_PI * e.harmonic_hz / SPEED_OF_LIGHT)
            cc1, cc2 = _MIX_COEFFS[e.label]
            c1.append(cc1)
            c2.append(cc2)
            off_idx.append(0 if e.label == "h_low" else 1)
            meas.append(e.phasor.phase_rad)
            weight.append(e.weight)
        self.rx_pos = np.asarray(rx_pos).reshape(-1, 3)  # (R, 3) distinct receivers
        self.uplink_idx = np.asarray(uplink_idx, dtype=int)
        self.k_h = np.asarray(k_h)              # (E,)
        self.c1 = np.asarray(c1)
        self.c2 = np.asarray(c2)
        self.off_idx = np.asarray(off_idx, dtype=int)
        self.meas = np.asarray(meas)
        self.weight = np.asarray(weight)
        slabs = ms.medium.slabs
        self.slab_lo = np.asarray([s.extent.min_corner for s in slabs]).reshape(-1, 3)
        self.slab_hi = np.asarray([s.extent.max_corner for s in slabs]).reshape(-1, 3)
        bg = math.sqrt(ms.medium.background.rel_permittivity)
        self.bg_index = bg
        self.slab_excess = np.asarray(
            [math.sqrt(s.rel_permittivity) - bg for s in slabs]
        )

    def _effective_distance(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Batched electrical length from points p (M,3) to a fixed q (3,)."""
        d = q[None, :] - p
        geo = np.linalg.norm(d, axis=1)
        eff = self.bg_index * geo
        for lo, hi, excess in zip(self.slab_lo, self.slab_hi, self.slab_excess):
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (lo[None, :] - p) / d
                tb = (hi[None, :] - p) / d
            tmin = np.minimum(ta, tb)
            tmax = np.maximum(ta, tb)
            degenerate = np.abs(d) < 1e-300
            inside = (p >= lo[None, :]) & (p <= hi[None, :])
            tmin = np.where(degenerate, np.where(inside, -np.inf, np.inf), tmin)
            tmax = np.where(degenerate, np.where(inside, np.inf, -np.inf), tmax)
            t0 = np.clip(tmin.max(axis=1), 0.0, 1.0)
            t1 = np.clip(tmax.min(axis=1), 0.0, 1.0)
            eff = eff + excess * np.maximum(0.0, t1 - t0) * geo
        return eff

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        """Objective for each row of theta (M, 5)."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        p = theta[:, :3]
        offs = theta[:, 3:5]
        phi1 = self.k1 * self._effective_distance(p, self.tx1)  # (M,)
        phi2 = self.k2 * self._effective_distance(p, self.tx2)
        uplink = np.stack(
            [self._effective_distance(p, q) for q in self.rx_pos], axis=1
        )  # (M, R)
        total = np.zeros(theta.shape[0])
        for e in range(self.meas.size):
            model = (
                self.c1[e] * phi1
                + self.c2[e] * phi2
                + self.k_h[e] * uplink[:, self.uplink_idx[e]]
                + offs[:, self.off_idx[e]]
            )
            r = wrap_pm_pi(self.meas[e] - model)
            total += self.weight[e] * r * r
        if self.offset_damping:
            total = total + self.offset_damping * (offs * offs).sum(axis=1)
        return total


@dataclass(frozen=True)
class AdamResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def _adam_batch(
    eval_batch,
    theta0: np.ndarray,
    params: LocalizerParams,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
):
    """Run Adam on every row of theta0 simultaneously.

    Returns (theta, values, iterations, converged, failed). A start stops on
    gradient tolerance (converged), on a stall (steps negligibly small), at
    max_iters, or on a non-finite objective (failed). When bounds are given,
    iterates are projected onto them after every update.
    """
    theta = np.array(theta0, dtype=float)
    n_starts, dim = theta.shape
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    active = np.ones(n_starts, dtype=bool)
    converged = np.zeros(n_starts, dtype=bool)
    failed = np.zeros(n_starts, dtype=bool)
    iterations = np.zeros(n_starts, dtype=int)
    stall_count = np.zeros(n_starts, dtype=int)
    h = params.grad_step
    eye = np.eye(dim)

    for t in range(1, params.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        th = theta[idx]  # (A, dim)
        probe = np.concatenate(
            [th[:, None, :] + h * eye[None, :, :], th[:, None, :] - h * eye[None, :, :]],
            axis=1,
        )  # (A, 2*dim, dim)
        vals = eval_batch(probe.reshape(-1, dim)).reshape(idx.size, 2 * dim)
        bad = ~np.isfinite(vals).all(axis=1)
        if bad.any():
            failed[idx[bad]] = True
            iterations[idx[bad]] = t
            active[idx[bad]] = False
            keep = ~bad
            idx = idx[keep]
            if idx.size == 0:
                continue
            vals = vals[keep]
            th = th[keep]
        g = (vals[:, :dim] - vals[:, dim:]) / (2.0 * h)  # (A, dim)
        iterations[idx] = t
        gnorm = np.sqrt((g * g).sum(axis=1))
        done = gnorm <= params.tol_grad
        if done.any():
            converged[idx[done]] = True
            active[idx[done]] = False
            live = ~done
            idx = idx[live]
            if idx.size == 0:
                continue
            g = g[live]
        m[idx] = params.beta1 * m[idx] + (1.0 - params.beta1) * g
        v[idx] = params.beta2 * v[idx] + (1.0 - params.beta2) * g * g
        m_hat = m[idx] / (1.0 - params.beta1 ** t)
        v_hat = v[idx] / (1.0 - params.beta2 ** t)
        step = params.learn_rate * m_hat / (np.sqrt(v_hat) + params.epsilon)
        before = theta[idx]
        updated = before - step
        if lower is not None:
            updated = np.maximum(updated, lower[None, :])
        if upper is not None:
            updated = np.minimum(updated, upper[None, :])
        moved = updated - before
        theta[idx] = updated
        small = np.sqrt((moved * moved).sum(axis=1)) <= params.stall_step
        stall_count[idx] = np.where(small, stall_count[idx] + 1, 0)
        stalled = stall_count[idx] >= params.stall_patience
        if stalled.any():
            active[idx[stalled]] = False
        if params.prune_after is not None and t == params.prune_after:
            live = np.flatnonzero(active)
            if live.size > params.prune_keep:
                current = eval_batch(theta[live])
                order = np.argsort(current, kind="stable")
                active[live[order[params.prune_keep :]]] = False

    values = eval_batch(theta)
    values = np.where(failed, np.inf, values)
    nonfinite = ~np.isfinite(values) & ~failed
    if nonfinite.any():
        failed |= nonfinite
        values = np.where(failed, np.inf, values)
    return theta, values, iterations, converged, failed


def adam_minimize(fn, initial, params: LocalizerParams | None = None, batch_fn=None) -> AdamResult:
    """Minimize a scalar function of a vector with Adam.

    fn maps a 1-D numpy array to a float; batch_fn, if given, maps an (M, dim)
    array to (M,) values and is used to evaluate finite-difference probes in
    one shot.
    """
    params = params or LocalizerParams()
    x0 = np.asarray(initial, dtype=float).ravel()
    if batch_fn is None:
        def eval_batch(pts):
            return np.asarray([float(fn(p)) for p in pts])
    else:
        eval_batch = batch_fn
    v0 = float(eval_batch(x0[None, :])[0])
    if not math.isfinite(v0):
        raise NonFiniteObjective(f"objective is {v0} at the initial point")
    theta, values, iterations, converged, failed = _adam_batch(
        eval_batch, x0[None, :], params
    )
    if failed[0]:
        raise NonFiniteObjective("objective became non-finite during optimization")
    return AdamResult(
        x=theta[0],
        value=float(values[0]),
        iterations=int(iterations[0]),
        converged=bool(converged[0]),
    )


@dataclass(frozen=True)
class LocalizationResult:
    position: Position
    objective: float
    iterations: int
    converged: bool
    starts_evaluated: int
    phase_offsets: tuple[float, float] = (0.0, 0.0)
    error_m: float | None = None


def grid_starts(box: Box, spacing: float) -> np.ndarray:
    """Deterministic start grid over the box: x outermost, z innermost."""
    axes = []
    for lo, hi in zip(box.min_corner, box.max_corner):
        count = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
        axes.append(lo + spacing * np.arange(count))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def localize(
    ms: MeasurementSet,
    search_box: Box,
    params: LocalizerParams | None = None,
    ground_truth: Position | None = None,
) -> LocalizationResult:
    """Multi-start Adam over the search box; best final objective wins.

    Position iterates are kept inside the search box; the estimate is a
    point in the stated volume, never outside it. Ties go to the earliest
    start in grid order. refine_top_k, when set, refines only the
    best-scoring k grid starts instead of all of them.
    """
    if not ms.entries:
        raise NoUsableMeasurements("measurement set has no usable entries")
    params = params or LocalizerParams()
    starts = grid_starts(search_box, params.start_spacing)
    n_starts = starts.shape[0]
    batched = BatchedObjective(ms, offset_damping=params.offset_damping)
    theta0 = np.hstack([starts, np.zeros((n_starts, 2))])
    if params.refine_top_k is not None and params.refine_top_k < n_starts:
        j0 = batched(theta0)
        j0 = np.where(np.isfinite(j0), j0, np.inf)
        picked = np.argsort(j0, kind="stable")[: params.refine_top_k]
        theta0 = theta0[np.sort(picked)]
    lower = np.asarray(list(search_box.min_corner) + [-np.inf, -np.inf])
    upper = np.asarray(list(search_box.max_corner) + [np.inf, np.inf])
    theta, values, iterations, converged, failed = _adam_batch(
        batched, theta0, params, lower=lower, upper=upper
    )
    if failed.all():
        raise NoConvergedStart("every start hit a non-finite objective")
    win = int(np.argmin(values))  # failed starts carry +inf
    pos = Position(*theta[win, :3])
    offsets = (float(theta[win, 3]), float(theta[win, 4]))
    final_obj = objective(ms, pos, offsets)
    error_m = None if ground_truth is None else pos.distance_to(ground_truth)
    return LocalizationResult(
        position=pos,
        objective=float(final_obj),
        iterations=int(iterations[win]),
        converged=bool(converged[win]),
        starts_evaluated=n_starts,
        phase_offsets=offsets,
        error_m=error_m,
    )


def localization_error_cm(est: Position, truth: Position) -> float:
    """Euclidean distance between two points, in centimeters."""
    return 100.0 * est.distance_to(truth)
