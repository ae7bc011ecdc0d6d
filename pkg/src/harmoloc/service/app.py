"""HTTP service exposing simulation, analysis, and localization.

All domain validation lives in the core package; endpoints translate
between JSON payloads and core types, and map domain errors to HTTP 400
responses with the error class name.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..dsp import extract_tone_phasor, peak_power_db, relative_gain_db, welch_psd
from ..errors import EmptyReport, HarmolocError, InsufficientSignal, ScenarioError
from ..harness import (
    MonteCarloReport,
    SweepSpec,
    svg_plot,
    montecarlo_csv,
    montecarlo_svg,
    run_montecarlo,
    run_sweep,
    sweep_csv,
    sweep_svg,
)
from ..localizer import LocalizerParams, localize, measurement_set_from_captures
from ..model import Scenario, scenario_hash
from ..presets import DEFAULT_SEARCH_BOX, PRESET_NAMES, scenario_preset
from ..synthesis import synthesize_all
from . import schemas


def _resolve_scenario(ref: schemas.ScenarioRef) -> Scenario:
    if (ref.scenario is None) == (ref.preset is None):
        raise ScenarioError("provide exactly one of 'scenario' or 'preset'")
    if ref.preset is not None:
        if ref.preset not in PRESET_NAMES:
            raise ScenarioError(
                f"unknown preset {ref.preset!r}; have {', '.join(PRESET_NAMES)}"
            )
        sc = scenario_preset(ref.preset)
    else:
        sc = ref.scenario.to_scenario()
    if ref.disable_noise:
        sc = dataclasses.replace(sc, noise_psd_db=None)
    elif ref.noise_psd_db is not None:
        sc = dataclasses.replace(sc, noise_psd_db=ref.noise_psd_db)
    if ref.seed is not None:
        sc = dataclasses.replace(sc, seed=int(ref.seed))
    return sc


def _svg_or_empty(render, report) -> str:
    # a report whose every row failed still travels back to the client;
    # it just has no curve to draw
    try:
        return render(report)
    except EmptyReport:
        return ""


def _clean(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        return None
    return value


def _analyze_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["rx_id", "harmonic_label", "center_frequency_hz", "tone_frequency_hz",
         "peak_db", "snr_db", "relative_gain_db"]
    )
    for row in rows:
        writer.writerow(
            [row.rx_id, row.harmonic_label, f"{row.center_frequency_hz:.6g}",
             f"{row.tone_frequency_hz:.6g}", f"{row.peak_db:.6g}",
             "" if row.snr_db is None else f"{row.snr_db:.6g}",
             "" if row.relative_gain_db is None else f"{row.relative_gain_db:.6g}"]
        )
    return buf.getvalue()


def create_app() -> FastAPI:
    app = FastAPI(title="harmoloc", version=__version__)

    @app.exception_handler(HarmolocError)
    async def _domain_error(request: Request, exc: HarmolocError):
        return JSONResponse(
            status_code=400,
            content=schemas.ErrorResponse(
                error=type(exc).__name__, detail=str(exc)
            ).model_dump(),
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        sc = _resolve_scenario(req)
        captures = synthesize_all(
            sc,
            duration_s=req.duration_s,
            sample_rate_hz=req.sample_rate_hz,
            tone_offset_hz=req.tone_offset_hz,
            rx_ids=req.rx_ids,
        )
        out = [
            schemas.CaptureModel.from_capture(cap, harmonic_label=label)
            for (rx_id, label), cap in sorted(captures.items())
        ]
        baseline = []
        if req.include_baseline:
            base_caps = synthesize_all(
                sc.without_device(),
                duration_s=req.duration_s,
                sample_rate_hz=req.sample_rate_hz,
                tone_offset_hz=req.tone_offset_hz,
                rx_ids=req.rx_ids,
            )
            baseline = [
                schemas.CaptureModel.from_capture(cap, harmonic_label=label)
                for (rx_id, label), cap in sorted(base_caps.items())
            ]
        return schemas.SimulateResponse(
            scenario_name=sc.name, scenario_hash=scenario_hash(sc),
            captures=out, baseline_captures=baseline,
        )

    @app.post("/analyze", response_model=schemas.AnalyzeResponse)
    def analyze(req: schemas.AnalyzeRequest):
        baselines = {}
        for model in req.baseline_captures:
            key = (model.rx_id, round(model.center_frequency_hz))
            baselines[key] = welch_psd(model.to_capture(), fft_size=req.fft_size)
        rows = []
        series = []
        for model in req.captures:
            cap = model.to_capture()
            tone_hz = cap.center_frequency_hz + req.tone_offset_hz
            psd = welch_psd(cap, fft_size=req.fft_size)
            peak = peak_power_db(psd, tone_hz)
            try:
                snr = extract_tone_phasor(cap, req.tone_offset_hz).snr_db
            except InsufficientSignal:
                snr = None
            rel = None
            key = (model.rx_id, round(cap.center_frequency_hz))
            if key in baselines:
                rel = relative_gain_db(psd, baselines[key], tone_hz)
            rows.append(
                schemas.AnalyzeRow(
                    rx_id=model.rx_id,
                    harmonic_label=model.harmonic_label,
                    center_frequency_hz=cap.center_frequency_hz,
                    tone_frequency_hz=tone_hz,
                    peak_db=peak.power_db,
                    snr_db=_clean(snr),
                    relative_gain_db=_clean(rel),
                )
            )
            if req.include_psd_plot:
                name = f"{model.rx_id} @{cap.center_frequency_hz / 1e6:.1f} MHz"
                offsets = psd.frequencies_hz - cap.center_frequency_hz
                series.append((name, offsets.tolist(), psd.power_db.tolist()))
        svg = ""
        if req.include_psd_plot and series:
            svg = svg_plot(
                "Power spectral density", "offset from center (Hz)", "power (dB)", series
            )
        return schemas.AnalyzeResponse(rows=rows, csv=_analyze_csv(rows), svg=svg)

    @app.post("/localize", response_model=schemas.LocalizeResponse)
    def localize_endpoint(req: schemas.LocalizeRequest):
        sc = _resolve_scenario(req)
        captures = [model.to_capture() for model in req.captures]
        ms = measurement_set_from_captures(sc, captures, tone_offset_hz=req.tone_offset_hz)
        box = req.search_box.to_box() if req.search_box else DEFAULT_SEARCH_BOX
        params = (
            LocalizerParams(**req.params.model_dump()) if req.params else None
        )
        truth = sc.device.position if sc.device is not None else None
        result = localize(ms, box, params, ground_truth=truth)
        return schemas.LocalizeResponse(
            position_cm=result.position.to_cm(),
            objective=result.objective,
            iterations=result.iterations,
            converged=result.converged,
            starts_evaluated=result.starts_evaluated,
            phase_offsets_rad=result.phase_offsets,
            error_cm=_clean(None if result.error_m is None else 100.0 * result.error_m),
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        sc = _resolve_scenario(req)
        spec = SweepSpec(
            scenario=sc,
            axis=req.axis,
            values=tuple(req.values),
            duration_s=req.duration_s,
            sample_rate_hz=req.sample_rate_hz,
            tone_offset_hz=req.tone_offset_hz,
            fft_size=req.fft_size,
        )
        report = run_sweep(spec)
        rows = []
        for row in report.rows:
            rows.append(
                schemas.SweepRowModel(
                    value=row.value,
                    gains_db={f"{r}/{l}": g for (r, l), g in sorted(row.gains_db.items())},
                    snrs_db={
                        f"{r}/{l}": _clean(s) for (r, l), s in sorted(row.snrs_db.items())
                    },
                    total_gain_db=_clean(row.total_gain_db),
                    below_detectability=row.below_detectability,
                    is_best=row.is_best,
                    error=row.error,
                )
            )
        best_pos = report.best_position
        return schemas.SweepResponse(
            axis=report.axis,
            rows=rows,
            best_value=report.best_value,
            best_position_cm=None if best_pos is None else best_pos.to_cm(),
            csv=sweep_csv(report),
            svg=_svg_or_empty(sweep_svg, report),
            row_failures=sum(1 for r in report.rows if r.error is not None),
        )

    @app.post("/montecarlo", response_model=schemas.MonteCarloResponse)
    def montecarlo(req: schemas.MonteCarloRequest):
        sc = _resolve_scenario(req)
        report: MonteCarloReport = run_montecarlo(
            sc,
            n_trials=req.n_trials,
            noise_levels=req.noise_levels,
            rx_subsets=[tuple(s) for s in req.rx_subsets],
            device_zone=req.device_zone.to_box() if req.device_zone else None,
            search_box=req.search_box.to_box() if req.search_box else None,
            duration_s=req.duration_s,
            sample_rate_hz=req.sample_rate_hz,
            tone_offset_hz=req.tone_offset_hz,
            params=LocalizerParams(**req.params.model_dump()) if req.params else None,
        )
        trials = [
            schemas.TrialRowModel(
                noise_psd_db=row.noise_psd_db,
                subset=row.subset,
                trial=row.trial,
                true_position_cm=row.true_position.to_cm(),
                error_cm=_clean(row.error_cm),
                dx_cm=_clean(row.dx_cm),
                dy_cm=_clean(row.dy_cm),
                dz_cm=_clean(row.dz_cm),
                status=row.status,
            )
            for row in report.trials
        ]
        summaries = [
            schemas.SummaryRowModel(
                noise_psd_db=s.noise_psd_db,
                subset=s.subset,
                n_ok=s.n_ok,
                n_failed=s.n_failed,
                median_cm=_clean(s.median_cm),
                p90_cm=_clean(s.p90_cm),
                y_dominant_fraction=_clean(s.y_dominant_fraction),
            )
            for s in report.summaries
        ]
        trials_text, summary_text = montecarlo_csv(report)
        return schemas.MonteCarloResponse(
            trials=trials,
            summaries=summaries,
            trials_csv=trials_text,
            summary_csv=summary_text,
            svg=_svg_or_empty(montecarlo_svg, report),
            row_failures=sum(1 for r in report.trials if r.status != "ok"),
        )

    return app


app = create_app()
