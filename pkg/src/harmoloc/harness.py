"""Batch experiment drivers: axis sweeps, Monte Carlo error studies, reports.

The sweep driver moves one knob at a time (device position, receiver gain,
or noise level), synthesizes paired with/without-device captures at each
value, and tabulates per-receiver per-harmonic relative gains.  The Monte
Carlo driver draws random device positions, runs the full capture ->
phasor -> localization chain for several receiver subsets with paired
noise realizations, and tabulates error distributions.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dsp import extract_tone_phasor, relative_gain_db, welch_psd
from .errors import (
    EmptyReport,
    HarmolocError,
    InsufficientSignal,
    NoUsableMeasurements,
    ScenarioError,
)
from .localizer import (
    LocalizerParams,
    MeasurementSet,
    localize,
    measurement_set_from_captures,
)
from .model import HARMONIC_LABELS, Box, Position, Scenario
from .synthesis import synthesize_all

SWEEP_AXES = ("device_y", "device_x", "rx_gain", "noise_level")

# Grid extent shared by the bench presets: positions live on a 70 x 70 cm
# table with up to 20 cm of height.
GRID_MAX_M = 0.70
GRID_MAX_Z_M = 0.20

# A row counts as below detectability when every relative gain is inside
# this band around zero.
DETECTABILITY_DB = 1.0

# Defaults for the Monte Carlo study, sized for the bench layouts: device
# draws stay a few centimetres inside the search volume so that clipped
# estimates remain distinguishable from good ones, and the search volume
# is generous along y where the two-receiver geometry is weakest.
DEFAULT_TRIAL_ZONE = Box((0.15, 0.25, 0.06), (0.45, 0.60, 0.14))
DEFAULT_MC_SEARCH_BOX = Box((0.05, 0.0, 0.04), (0.55, 0.90, 0.16))
DEFAULT_MC_PARAMS = LocalizerParams(max_iters=1500, prune_after=150, prune_keep=16)
DEFAULT_MC_DURATION_S = 64e-6


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional experiment: vary a single knob over ordered values."""

    scenario: Scenario
    axis: str
    values: tuple = ()
    out_dir: Optional[Path] = None
    duration_s: float = 0.02
    sample_rate_hz: float = 1e6
    tone_offset_hz: float = 100e3
    fft_size: int = 4096

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ScenarioError(f"unknown sweep axis {self.axis!r}; expected one of {SWEEP_AXES}")
        if len(self.values) < 1:
            raise ScenarioError("sweep needs at least one value")
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if self.axis in ("device_x", "device_y"):
            if self.scenario.device is None:
                raise ScenarioError(f"axis {self.axis!r} requires a scenario with a device")
            for v in vals:
                if not 0.0 <= v <= GRID_MAX_M:
                    raise ScenarioError(
                        f"{self.axis} value {v} outside grid bounds [0, {GRID_MAX_M}] m"
                    )
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise ScenarioError("duration and sample rate must be positive")


def apply_sweep_value(scenario: Scenario, axis: str, value: float) -> Scenario:
    """Return a copy of the scenario with one knob set to ``value``."""
    if axis == "device_x" or axis == "device_y":
        if scenario.device is None:
            raise ScenarioError(f"axis {axis!r} requires a scenario with a device")
        p = scenario.device.position
        moved = Position(value, p.y, p.z) if axis == "device_x" else Position(p.x, value, p.z)
        return scenario.with_device_at(moved)
    if axis == "rx_gain":
        antennas = tuple(
            dataclasses.replace(a, chain_gain_db=float(value)) if a.role == "rx" else a
            for a in scenario.antennas
        )
        return dataclasses.replace(scenario, antennas=antennas)
    if axis == "noise_level":
        return dataclasses.replace(scenario, noise_psd_db=float(value))
    raise ScenarioError(f"unknown sweep axis {axis!r}")


@dataclass
class SweepRow:
    value: float
    gains_db: dict = field(default_factory=dict)  # (rx_id, label) -> dB
    snrs_db: dict = field(default_factory=dict)  # (rx_id, label) -> dB or nan
    total_gain_db: float = float("nan")
    below_detectability: bool = False
    is_best: bool = False
    error: Optional[str] = None


@dataclass
class ExperimentReport:
    """Sweep result: one row per swept value plus a best-value summary."""

    axis: str
    rows: list
    best_value: Optional[float] = None
    best_position: Optional[Position] = None

    @property
    def is_empty(self) -> bool:
        return len(self.rows) == 0


def _sweep_row(spec: SweepSpec, value: float) -> SweepRow:
    sc = apply_sweep_value(spec.scenario, spec.axis, value)
    with_caps = synthesize_all(
        sc,
        duration_s=spec.duration_s,
        sample_rate_hz=spec.sample_rate_hz,
        tone_offset_hz=spec.tone_offset_hz,
    )
    without_caps = synthesize_all(
        sc.without_device(),
        duration_s=spec.duration_s,
        sample_rate_hz=spec.sample_rate_hz,
        tone_offset_hz=spec.tone_offset_hz,
    )
    row = SweepRow(value=value)
    for key in sorted(with_caps):
        rx_id, label = key
        harmonic_hz = sc.harmonic_hz(label)
        psd_with = welch_psd(with_caps[key], fft_size=spec.fft_size)
        psd_without = welch_psd(without_caps[key], fft_size=spec.fft_size)
        row.gains_db[key] = relative_gain_db(psd_with, psd_without, harmonic_hz)
        try:
            row.snrs_db[key] = extract_tone_phasor(with_caps[key], spec.tone_offset_hz).snr_db
        except InsufficientSignal:
            row.snrs_db[key] = float("nan")
    gains = list(row.gains_db.values())
    row.total_gain_db = float(sum(gains))
    row.below_detectability = all(abs(g) < DETECTABILITY_DB for g in gains)
    return row


def run_sweep(spec: SweepSpec) -> ExperimentReport:
    """Run a one-axis sweep with paired with/without-device captures.

    Row-level failures are recorded on the row and do not abort the
    remaining values.  The best value is the one with the largest summed
    relative gain, provided that gain is positive; otherwise the summary
    is left unset (rendered as N/A in reports).
    """
    rows = []
    for value in spec.values:
        try:
            rows.append(_sweep_row(spec, value))
        except HarmolocError as exc:
            rows.append(SweepRow(value=value, error=f"{type(exc).__name__}: {exc}"))
    report = ExperimentReport(axis=spec.axis, rows=rows)
    candidates = [r for r in rows if r.error is None and r.total_gain_db > 0.0]
    if candidates:
        best = max(candidates, key=lambda r: r.total_gain_db)
        best.is_best = True
        report.best_value = best.value
        if spec.axis in ("device_x", "device_y") and spec.scenario.device is not None:
            report.best_position = apply_sweep_value(
                spec.scenario, spec.axis, best.value
            ).device.position
    return report


@dataclass
class TrialRow:
    noise_psd_db: Optional[float]
    subset: str
    trial: int
    true_position: Position
    error_cm: float = float("nan")
    dx_cm: float = float("nan")
    dy_cm: float = float("nan")
    dz_cm: float = float("nan")
    status: str = "ok"


@dataclass
class SummaryRow:
    noise_psd_db: Optional[float]
    subset: str
    n_ok: int
    n_failed: int
    median_cm: float
    p90_cm: float
    y_dominant_fraction: float


@dataclass
class MonteCarloReport:
    """Error distribution over (noise level, receiver subset) cells."""

    trials: list
    summaries: list

    @property
    def is_empty(self) -> bool:
        return len(self.trials) == 0

    def summary(self, noise_psd_db, subset_ids) -> SummaryRow:
        label = subset_label(subset_ids)
        for s in self.summaries:
            if s.noise_psd_db == noise_psd_db and s.subset == label:
                return s
        raise KeyError((noise_psd_db, label))


def subset_label(rx_ids) -> str:
    return "+".join(sorted(rx_ids))


def run_montecarlo(
    scenario: Scenario,
    n_trials: int,
    noise_levels: Sequence,
    rx_subsets: Sequence,
    device_zone: Optional[Box] = None,
    search_box: Optional[Box] = None,
    duration_s: float = DEFAULT_MC_DURATION_S,
    sample_rate_hz: float = 1e6,
    tone_offset_hz: float = 100e3,
    params: Optional[LocalizerParams] = None,
    seed: Optional[int] = None,
) -> MonteCarloReport:
    """Paired Monte Carlo localization study.

    For each trial a device position is drawn uniformly from
    ``device_zone``; the same positions are reused across all noise
    levels and receiver subsets.  Captures are synthesized once per
    (noise level, trial) for the full receiver set and every subset is
    measured from the same captures, so subset comparisons see identical
    noise realizations.  Trials where a subset yields no usable
    measurements are recorded as failed rows rather than aborting.
    """
    if n_trials < 1:
        raise ScenarioError("n_trials must be >= 1")
    if len(noise_levels) == 0:
        raise ScenarioError("need at least one noise level")
    if len(rx_subsets) == 0:
        raise ScenarioError("need at least one receiver subset")
    rx_ids = {a.id for a in scenario.receivers}
    subsets = []
    for subset in rx_subsets:
        ids = frozenset(subset)
        if not ids:
            raise ScenarioError("receiver subsets must be non-empty")
        unknown = ids - rx_ids
        if unknown:
            raise ScenarioError(f"unknown receiver ids in subset: {sorted(unknown)}")
        subsets.append(ids)
    zone = device_zone if device_zone is not None else DEFAULT_TRIAL_ZONE
    box = search_box if search_box is not None else DEFAULT_MC_SEARCH_BOX
    params = params if params is not None else DEFAULT_MC_PARAMS
    base_seed = scenario.seed if seed is None else int(seed)

    rng = np.random.default_rng(base_seed)
    lo = np.asarray(zone.min_corner, dtype=float)
    hi = np.asarray(zone.max_corner, dtype=float)
    positions = [Position(*rng.uniform(lo, hi)) for _ in range(n_trials)]

    trials = []
    summaries = []
    for level in noise_levels:
        psd = None if level is None else float(level)
        cell = {ids: [] for ids in subsets}
        for t, truth in enumerate(positions):
            sc = dataclasses.replace(
                scenario.with_device_at(truth), noise_psd_db=psd, seed=base_seed + t
            )
            captures = synthesize_all(
                sc,
                duration_s=duration_s,
                sample_rate_hz=sample_rate_hz,
                tone_offset_hz=tone_offset_hz,
            )
            ms_full = measurement_set_from_captures(sc, captures, tone_offset_hz=tone_offset_hz)
            for ids in subsets:
                row = TrialRow(
                    noise_psd_db=psd, subset=subset_label(ids), trial=t, true_position=truth
                )
                entries = tuple(e for e in ms_full.entries if e.rx_id in ids)
                try:
                    if not entries:
                        raise NoUsableMeasurements(
                            f"no usable tones for subset {row.subset} in trial {t}"
                        )
                    ms = MeasurementSet(
                        f1_hz=ms_full.f1_hz,
                        f2_hz=ms_full.f2_hz,
                        geometry=ms_full.geometry,
                        medium=ms_full.medium,
                        entries=entries,
                    )
                    result = localize(ms, box, params, ground_truth=truth)
                except NoUsableMeasurements as exc:
                    row.status = f"no_usable_measurements: {exc}"
                else:
                    delta = result.position.as_array() - truth.as_array()
                    row.error_cm = 100.0 * result.error_m
                    row.dx_cm, row.dy_cm, row.dz_cm = (100.0 * delta).tolist()
                    cell[ids].append((row.error_cm, delta))
                trials.append(row)
        for ids in subsets:
            done = cell[ids]
            errors = np.array([e for e, _ in done], dtype=float)
            if errors.size:
                deltas = np.abs(np.array([d for _, d in done]))
                y_dom = float(np.mean(np.argmax(deltas, axis=1) == 1))
                median = float(np.median(errors))
                p90 = float(np.percentile(errors, 90.0))
            else:
                y_dom = float("nan")
                median = float("nan")
                p90 = float("nan")
            summaries.append(
                SummaryRow(
                    noise_psd_db=psd,
                    subset=subset_label(ids),
                    n_ok=len(done),
                    n_failed=n_trials - len(done),
                    median_cm=median,
                    p90_cm=p90,
                    y_dominant_fraction=y_dom,
                )
            )
    return MonteCarloReport(trials=trials, summaries=summaries)


def _fmt(value) -> str:
    if value is None:
        return "N/A"
    if isinstance(value, float):
        if np.isnan(value):
            return ""
        return f"{value:.6g}"
    return str(value)


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _sweep_csv(report: ExperimentReport) -> str:
    keys = sorted({k for row in report.rows for k in row.gains_db})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [report.axis]
    for rx_id, label in keys:
        header += [f"{rx_id}_{label}_gain_db", f"{rx_id}_{label}_snr_db"]
    header += ["total_gain_db", "below_detectability", "best", "error"]
    writer.writerow(header)
    for row in report.rows:
        rec = [_fmt(row.value)]
        for key in keys:
            rec.append(_fmt(row.gains_db.get(key, float("nan"))))
            rec.append(_fmt(row.snrs_db.get(key, float("nan"))))
        rec += [
            _fmt(row.total_gain_db),
            "yes" if row.below_detectability else "no",
            "*" if row.is_best else "",
            row.error or "",
        ]
        writer.writerow(rec)
    writer.writerow([])
    best_pos = report.best_position
    writer.writerow(
        [
            "best_value",
            _fmt(report.best_value),
            "best_position_cm",
            "" if best_pos is None else _fmt(best_pos.to_cm()[0]),
            "" if best_pos is None else _fmt(best_pos.to_cm()[1]),
            "" if best_pos is None else _fmt(best_pos.to_cm()[2]),
        ]
    )
    return buf.getvalue()


def _montecarlo_csv(report: MonteCarloReport) -> tuple:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["noise_psd_db", "subset", "trial", "true_x_cm", "true_y_cm", "true_z_cm",
         "error_cm", "dx_cm", "dy_cm", "dz_cm", "status"]
    )
    for row in report.trials:
        tx, ty, tz = row.true_position.to_cm()
        writer.writerow(
            [_fmt(row.noise_psd_db), row.subset, row.trial, _fmt(tx), _fmt(ty), _fmt(tz),
             _fmt(row.error_cm), _fmt(row.dx_cm), _fmt(row.dy_cm), _fmt(row.dz_cm), row.status]
        )
    sbuf = io.StringIO()
    swriter = csv.writer(sbuf, lineterminator="\n")
    swriter.writerow(
        ["noise_psd_db", "subset", "n_ok", "n_failed", "median_cm", "p90_cm",
         "y_dominant_fraction"]
    )
    for s in report.summaries:
        swriter.writerow(
            [_fmt(s.noise_psd_db), s.subset, s.n_ok, s.n_failed, _fmt(s.median_cm),
             _fmt(s.p90_cm), _fmt(s.y_dominant_fraction)]
        )
    return buf.getvalue(), sbuf.getvalue()


_SVG_W, _SVG_H = 640, 400
_MARGIN = 60
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def svg_plot(title: str, x_label: str, y_label: str, series: list) -> str:
    """Render named (x, y) polylines as a standalone SVG document.

    ``series`` is a list of (name, xs, ys) with equal-length sequences;
    non-finite points are dropped.  Output bytes are deterministic for
    deterministic input.
    """
    pts = [
        (x, y)
        for _, xs, ys in series
        for x, y in zip(xs, ys)
        if np.isfinite(x) and np.isfinite(y)
    ]
    if not pts:
        raise EmptyReport("nothing to plot")
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = _SVG_W - 2 * _MARGIN
    plot_h = _SVG_H - 2 * _MARGIN

    def sx(x):
        return _MARGIN + plot_w * (x - x_lo) / (x_hi - x_lo)

    def sy(y):
        return _SVG_H - _MARGIN - plot_h * (y - y_lo) / (y_hi - y_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">{title}</text>',
    ]
    axis = (
        f'<polyline fill="none" stroke="black" stroke-width="1" points="'
        f"{_MARGIN},{_MARGIN} {_MARGIN},{_SVG_H - _MARGIN} "
        f'{_SVG_W - _MARGIN},{_SVG_H - _MARGIN}"/>'
    )
    out.append(axis)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        out.append(
            f'<text x="{sx(xv):.1f}" y="{_SVG_H - _MARGIN + 18:.1f}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{xv:.4g}</text>'
        )
        out.append(
            f'<text x="{_MARGIN - 8:.1f}" y="{sy(yv) + 4:.1f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{yv:.4g}</text>'
        )
    out.append(
        f'<text x="{_SVG_W / 2:.1f}" y="{_SVG_H - 12:.1f}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{_SVG_H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {_SVG_H / 2:.1f})">{y_label}</text>'
    )
    for i, (name, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(
            f"{sx(x):.2f},{sy(y):.2f}"
            for x, y in zip(xs, ys)
            if np.isfinite(x) and np.isfinite(y)
        )
        if not coords:
            continue
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'
        )
        out.append(
            f'<text x="{_SVG_W - _MARGIN + 4}" y="{_MARGIN + 16 * i + 12}" font-size="11" '
            f'font-family="sans-serif" fill="{color}">{name}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sweep_csv(report: ExperimentReport) -> str:
    if report.is_empty:
        raise EmptyReport("sweep report has no rows")
    return _sweep_csv(report)


def sweep_svg(report: ExperimentReport) -> str:
    if report.is_empty:
        raise EmptyReport("sweep report has no rows")
    keys = sorted({k for row in report.rows for k in row.gains_db})
    series = []
    for rx_id, label in keys:
        xs = [r.value for r in report.rows if r.error is None]
        ys = [
            r.gains_db.get((rx_id, label), float("nan"))
            for r in report.rows
            if r.error is None
        ]
        series.append((f"{rx_id} {label}", xs, ys))
    return svg_plot(
        f"Relative gain vs {report.axis}", report.axis, "relative gain (dB)", series
    )


def montecarlo_csv(report: MonteCarloReport) -> tuple:
    if report.is_empty:
        raise EmptyReport("Monte Carlo report has no trials")
    return _montecarlo_csv(report)


def montecarlo_svg(report: MonteCarloReport) -> str:
    if report.is_empty:
        raise EmptyReport("Monte Carlo report has no trials")
    subsets = sorted({s.subset for s in report.summaries})
    levels = []
    for s in report.summaries:
        if s.noise_psd_db not in levels:
            levels.append(s.noise_psd_db)
    xs = list(range(len(levels)))
    series = []
    for subset in subsets:
        ys = []
        for level in levels:
            match = [
                s.median_cm
                for s in report.summaries
                if s.subset == subset and s.noise_psd_db == level
            ]
            ys.append(match[0] if match else float("nan"))
        series.append((subset, xs, ys))
    return svg_plot(
        "Median localization error vs noise level",
        "noise level index",
        "median error (cm)",
        series,
    )


def emit_report(report, fmt: str, out_dir) -> list:
    """Write a sweep or Monte Carlo report to ``out_dir`` as CSV or SVG.

    Returns the list of written paths.  Output bytes are deterministic
    for a deterministic report.
    """
    out_dir = Path(out_dir)
    if fmt not in ("csv", "svg"):
        raise ScenarioError(f"unknown report format {fmt!r}; expected 'csv' or 'svg'")
    if isinstance(report, ExperimentReport):
        if fmt == "csv":
            return [_write_text(out_dir / "sweep.csv", sweep_csv(report))]
        return [_write_text(out_dir / "sweep.svg", sweep_svg(report))]
    if isinstance(report, MonteCarloReport):
        if fmt == "csv":
            trials_csv, summary_csv = montecarlo_csv(report)
            return [
                _write_text(out_dir / "montecarlo_trials.csv", trials_csv),
                _write_text(out_dir / "montecarlo_summary.csv", summary_csv),
            ]
        return [_write_text(out_dir / "montecarlo.svg", montecarlo_svg(report))]
    raise ScenarioError(f"unsupported report type {type(report).__name__}")
