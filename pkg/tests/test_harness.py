"""Sweep and Monte Carlo experiment drivers plus their CSV/SVG reports."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from harmoloc import Box, LocalizerParams, Position, scenario_preset
from harmoloc.errors import EmptyReport, ScenarioError
from harmoloc.harness import (
    ExperimentReport,
    MonteCarloReport,
    SweepSpec,
    apply_sweep_value,
    emit_report,
    montecarlo_csv,
    montecarlo_svg,
    run_montecarlo,
    run_sweep,
    subset_label,
    sweep_csv,
    sweep_svg,
    svg_plot,
)

FAST = LocalizerParams(max_iters=1500, prune_after=150, prune_keep=16)


def _fast_spec(**kw):
    defaults = dict(
        scenario=scenario_preset("air_c1", noise_psd_db=-130.0, seed=0),
        axis="device_y",
        values=(0.1, 0.3),
        duration_s=0.005,
        fft_size=1024,
    )
    defaults.update(kw)
    return SweepSpec(**defaults)


# --- spec validation ---------------------------------------------------------

def test_sweep_spec_validation():
    with pytest.raises(ScenarioError):
        _fast_spec(axis="device_q")
    with pytest.raises(ScenarioError):
        _fast_spec(values=())
    with pytest.raises(ScenarioError):
        _fast_spec(values=(0.1, 0.8))  # past the 70 cm grid
    with pytest.raises(ScenarioError):
        _fast_spec(values=(-0.1,))
    with pytest.raises(ScenarioError):
        _fast_spec(duration_s=0.0)
    with pytest.raises(ScenarioError):
        _fast_spec(
            scenario=scenario_preset("air_c1").without_device(), axis="device_y")


def test_apply_sweep_value_axes():
    sc = scenario_preset("air_c1")
    moved = apply_sweep_value(sc, "device_y", 0.55)
    assert moved.device.position.y == 0.55
    assert moved.device.position.x == sc.device.position.x
    moved = apply_sweep_value(sc, "device_x", 0.12)
    assert moved.device.position.x == 0.12
    gained = apply_sweep_value(sc, "rx_gain", 33.0)
    assert all(rx.chain_gain_db == 33.0 for rx in gained.receivers)
    assert all(tx.chain_gain_db == sc.antenna(tx.id).chain_gain_db
               for tx in gained.transmitters)
    noisy = apply_sweep_value(sc, "noise_level", -99.0)
    assert noisy.noise_psd_db == -99.0


# --- sweeps --------------------------------------------------------------------

def test_run_sweep_row_per_value():
    values = tuple(np.round(np.arange(0.0, 0.71, 0.10), 2))
    spec = _fast_spec(values=values)
    report = run_sweep(spec)
    assert len(report.rows) == 8
    assert [r.value for r in report.rows] == list(values)


def test_run_sweep_near_device_is_detectable():
    report = run_sweep(_fast_spec(values=(0.15,)))
    row = report.rows[0]
    assert row.error is None
    assert max(row.gains_db.values()) > 3.0
    assert not row.below_detectability
    assert report.best_value == 0.15
    assert report.best_position is not None


def test_run_sweep_no_device_reports_no_best():
    # sweeping receiver gain without a device: every relative gain sits at 0
    spec = _fast_spec(
        scenario=scenario_preset("air_c1", noise_psd_db=-130.0).without_device(),
        axis="rx_gain",
        values=(10.0, 20.0),
    )
    report = run_sweep(spec)
    assert report.best_value is None
    assert report.best_position is None
    for row in report.rows:
        assert row.below_detectability
        assert all(abs(g) < 1.0 for g in row.gains_db.values())


def test_run_sweep_isolates_row_failures():
    # the middle value drops the device exactly onto rx1, which cannot be
    # simulated; that row records the error, the rest still run
    sc = scenario_preset("air_c1", noise_psd_db=-130.0)
    sc = sc.with_device_at(Position(0.18, 0.10, 0.08))
    spec = _fast_spec(scenario=sc, values=(0.10, 0.0, 0.30))
    report = run_sweep(spec)
    assert [r.error is None for r in report.rows] == [True, False, True]
    assert "DegeneratePath" in report.rows[1].error
    assert report.best_value in (0.10, 0.30)


def test_sweep_csv_content():
    report = run_sweep(_fast_spec(values=(0.15, 0.45)))
    text = sweep_csv(report)
    lines = text.strip().splitlines()
    assert lines[0].startswith("device_y")
    assert "best_value" in text
    # deterministic bytes
    assert text == sweep_csv(report)


def test_sweep_csv_na_marker():
    spec = _fast_spec(
        scenario=scenario_preset("air_c1", noise_psd_db=-130.0).without_device(),
        axis="rx_gain",
        values=(10.0,),
    )
    text = sweep_csv(run_sweep(spec))
    assert "N/A" in text


def test_sweep_svg_is_valid_xml():
    report = run_sweep(_fast_spec(values=(0.15, 0.45)))
    svg = sweep_svg(report)
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert svg == sweep_svg(report)


def test_svg_plot_empty_series():
    with pytest.raises(EmptyReport):
        svg_plot("t", "x", "y", [])
    with pytest.raises(EmptyReport):
        svg_plot("t", "x", "y", [("s", [], [])])


def test_emit_report_sweep(tmp_path):
    report = run_sweep(_fast_spec(values=(0.15,)))
    paths = emit_report(report, "csv", tmp_path)
    assert [p.name for p in paths] == ["sweep.csv"]
    first = paths[0].read_bytes()
    emit_report(report, "csv", tmp_path)
    assert paths[0].read_bytes() == first
    svg_paths = emit_report(report, "svg", tmp_path)
    assert [p.name for p in svg_paths] == ["sweep.svg"]
    with pytest.raises(ScenarioError):
        emit_report(report, "pdf", tmp_path)
    with pytest.raises(ScenarioError):
        emit_report("not a report", "csv", tmp_path)


def test_emit_report_empty():
    empty = ExperimentReport(axis="device_y", rows=[])
    with pytest.raises(EmptyReport):
        sweep_csv(empty)
    with pytest.raises(EmptyReport):
        sweep_svg(empty)
    with pytest.raises(EmptyReport):
        montecarlo_csv(MonteCarloReport(trials=[], summaries=[]))
    with pytest.raises(EmptyReport):
        montecarlo_svg(MonteCarloReport(trials=[], summaries=[]))


# --- monte carlo -----------------------------------------------------------------

def test_run_montecarlo_validation():
    sc = scenario_preset("air_c1_3rx")
    with pytest.raises(ScenarioError):
        run_montecarlo(sc, 0, [None], [("rx1", "rx2")])
    with pytest.raises(ScenarioError):
        run_montecarlo(sc, 1, [], [("rx1", "rx2")])
    with pytest.raises(ScenarioError):
        run_montecarlo(sc, 1, [None], [])
    with pytest.raises(ScenarioError):
        run_montecarlo(sc, 1, [None], [("rx1", "rx9")])
    with pytest.raises(ScenarioError):
        run_montecarlo(sc.without_device(), 1, [None], [("rx1", "rx2")])


def test_subset_label_sorted():
    assert subset_label(("rx2", "rx1")) == "rx1+rx2"


def test_run_montecarlo_noiseless_three_rx():
    sc = scenario_preset("air_c1_3rx", noise_psd_db=None)
    report = run_montecarlo(sc, 3, [None], [("rx1", "rx2", "rx3")],
                            duration_s=0.001, params=FAST, seed=8)
    assert len(report.trials) == 3
    s = report.summary(None, ("rx1", "rx2", "rx3"))
    assert s.n_ok == 3
    assert s.n_failed == 0
    assert s.median_cm < 0.1
    # every trial carries a per-axis error breakdown
    for t in report.trials:
        assert t.status == "ok"
        assert abs(t.error_cm - np.hypot(np.hypot(t.dx_cm, t.dy_cm), t.dz_cm)) < 1e-9


def test_run_montecarlo_single_trial_degenerate_stats():
    sc = scenario_preset("air_c1_3rx", noise_psd_db=None)
    report = run_montecarlo(sc, 1, [None], [("rx1", "rx2", "rx3")],
                            duration_s=0.001, params=FAST, seed=3)
    s = report.summaries[0]
    assert s.median_cm == s.p90_cm == report.trials[0].error_cm


def test_run_montecarlo_positions_paired_across_levels():
    sc = scenario_preset("air_c1_3rx")
    report = run_montecarlo(sc, 2, [-140.0, None], [("rx1", "rx2", "rx3")],
                            duration_s=64e-6, params=FAST, seed=5)
    by_level = {}
    for t in report.trials:
        by_level.setdefault(t.noise_psd_db, []).append(t.true_position)
    levels = list(by_level.values())
    assert levels[0] == levels[1]


def test_run_montecarlo_records_unusable_trials():
    # noise loud enough to bury both harmonics: rows fail, nothing raises
    sc = scenario_preset("air_c1_3rx", noise_psd_db=-100.0)
    report = run_montecarlo(sc, 1, [-100.0], [("rx1", "rx2", "rx3")],
                            duration_s=64e-6, params=FAST, seed=2)
    t = report.trials[0]
    assert t.status != "ok"
    assert np.isnan(t.error_cm)
    s = report.summaries[0]
    assert s.n_ok == 0
    assert s.n_failed == 1
    assert np.isnan(s.median_cm)


def test_montecarlo_reports(tmp_path):
    sc = scenario_preset("air_c1_3rx", noise_psd_db=None)
    report = run_montecarlo(sc, 2, [None], [("rx1", "rx2"), ("rx1", "rx2", "rx3")],
                            duration_s=0.001, params=FAST, seed=8)
    trials_csv, summary_csv = montecarlo_csv(report)
    assert "rx1+rx2+rx3" in summary_csv
    assert trials_csv.count("\n") >= 4
    paths = emit_report(report, "csv", tmp_path)
    assert sorted(p.name for p in paths) == [
        "montecarlo_summary.csv", "montecarlo_trials.csv"]
    svg = montecarlo_svg(report)
    ET.fromstring(svg)
    assert emit_report(report, "svg", tmp_path)[0].name == "montecarlo.svg"
