"""Command-line client for the simulation/localization service.

Every subcommand talks to the HTTP API.  By default the service runs
in-process (no sockets); pass --server to target a running instance.

Exit codes: 0 on success, 1 on validation errors (bad arguments, bad
scenario files, rejected requests), 2 when the run completed but some
rows failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from .errors import HarmolocError
from .model import scenario_from_dict, scenario_to_dict
from .presets import PRESET_NAMES
from .synthesis import read_capture, write_capture

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ROW_FAILURES = 2


class CliError(Exception):
    """Invalid command-line input or a rejected request."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors by default; the
    # contract here reserves 2 for row-level failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # Synchronous in-process ASGI client; no sockets involved.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service.app import app

    return TestClient(app, base_url="http://service", raise_server_exceptions=False)


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            body = response.json()
            detail = f"{body.get('error', response.status_code)}: {body.get('detail', body)}"
        except ValueError:
            detail = response.text
        raise CliError(f"{path} failed ({response.status_code}): {detail}")
    return response.json()


def _scenario_ref(args) -> dict:
    if getattr(args, "scenario", None):
        doc = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
        # Round-trip through the loader so bad files fail here, client-side,
        # with a domain error instead of a generic 422.
        scenario_from_dict(doc)
        ref = {"scenario": doc}
    elif getattr(args, "preset", None):
        ref = {"preset": args.preset}
    else:
        raise CliError("provide --scenario FILE or --preset NAME")
    if getattr(args, "seed", None) is not None:
        ref["seed"] = args.seed
    if getattr(args, "noise_psd", None) is not None:
        if args.noise_psd == "none":
            ref["disable_noise"] = True
        else:
            ref["noise_psd_db"] = float(args.noise_psd)
    return ref


def _add_scenario_args(sub, seed_default=None):
    group = sub.add_mutually_exclusive_group()
    group.add_argument("--scenario", help="scenario JSON file")
    group.add_argument("--preset", help=f"preset name: {', '.join(PRESET_NAMES)}")
    sub.add_argument("--seed", type=int, default=seed_default, help="override scenario seed")
    sub.add_argument(
        "--noise-psd", default=None,
        help="override noise PSD in dBFS/Hz, or 'none' to disable noise",
    )


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_capture_model(path: Path) -> dict:
    from .service.schemas import CaptureModel

    capture = read_capture(path)
    return CaptureModel.from_capture(capture).model_dump()


def cmd_simulate(args, client) -> int:
    payload = _scenario_ref(args)
    payload.update(
        duration_s=args.duration,
        sample_rate_hz=args.sample_rate,
        tone_offset_hz=args.tone_offset,
        include_baseline=args.with_baseline,
    )
    body = _post(client, "/simulate", payload)
    out = _out_dir(args)
    from .service.schemas import CaptureModel

    written = []
    for group, suffix in (("captures", ""), ("baseline_captures", "_baseline")):
        for item in body[group]:
            model = CaptureModel.model_validate(item)
            capture = model.to_capture()
            name = f"{model.rx_id}_{model.harmonic_label}{suffix}.cf32"
            paths = write_capture(capture, out / name)
            written.extend(paths)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_analyze(args, client) -> int:
    payload = {
        "captures": [_load_capture_model(Path(p)) for p in args.captures],
        "baseline_captures": [_load_capture_model(Path(p)) for p in args.baseline or []],
        "fft_size": args.fft_size,
        "tone_offset_hz": args.tone_offset,
        "include_psd_plot": args.format == "svg",
    }
    body = _post(client, "/analyze", payload)
    out = _out_dir(args)
    if args.format == "csv":
        path = out / "analyze.csv"
        path.write_text(body["csv"], encoding="utf-8")
    else:
        path = out / "analyze.svg"
        path.write_text(body["svg"], encoding="utf-8")
    print(path)
    return EXIT_OK


def cmd_localize(args, client) -> int:
    payload = _scenario_ref(args)
    payload["captures"] = [_load_capture_model(Path(p)) for p in args.captures]
    payload["tone_offset_hz"] = args.tone_offset
    if args.search_box:
        vals = [float(v) for v in args.search_box.split(",")]
        if len(vals) != 6:
            raise CliError("--search-box needs 6 comma-separated numbers: x0,y0,z0,x1,y1,z1")
        payload["search_box"] = {"min": vals[:3], "max": vals[3:]}
    body = _post(client, "/localize", payload)
    out = _out_dir(args)
    path = out / "position.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    x, y, z = body["position_cm"]
    line = f"position_cm=({x:.2f}, {y:.2f}, {z:.2f}) objective={body['objective']:.3e}"
    if body.get("error_cm") is not None:
        line += f" error_cm={body['error_cm']:.3f}"
    print(line)
    print(path)
    return EXIT_OK


def cmd_sweep(args, client) -> int:
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        spec["seed"] = args.seed
    body = _post(client, "/sweep", spec)
    out = _out_dir(args)
    written = []
    if args.format in ("csv", "both"):
        path = out / "sweep.csv"
        path.write_text(body["csv"], encoding="utf-8")
        written.append(path)
    if args.format in ("svg", "both"):
        path = out / "sweep.svg"
        path.write_text(body["svg"], encoding="utf-8")
        written.append(path)
    for path in written:
        print(path)
    best = body.get("best_value")
    print(f"best_value={'N/A' if best is None else best}")
    if body.get("row_failures", 0) > 0:
        print(f"row failures: {body['row_failures']}", file=sys.stderr)
        return EXIT_ROW_FAILURES
    return EXIT_OK


def cmd_montecarlo(args, client) -> int:
    payload = _scenario_ref(args)
    levels = []
    for token in args.noise_levels.split(","):
        token = token.strip()
        levels.append(None if token.lower() == "none" else float(token))
    subsets = [
        [rx.strip() for rx in group.split(",") if rx.strip()]
        for group in args.subsets.split(";")
        if group.strip()
    ]
    payload.update(
        n_trials=args.trials,
        noise_levels=levels,
        rx_subsets=subsets,
        duration_s=args.duration,
        tone_offset_hz=args.tone_offset,
    )
    body = _post(client, "/montecarlo", payload)
    out = _out_dir(args)
    written = []
    if args.format in ("csv", "both"):
        trials_path = out / "montecarlo_trials.csv"
        trials_path.write_text(body["trials_csv"], encoding="utf-8")
        summary_path = out / "montecarlo_summary.csv"
        summary_path.write_text(body["summary_csv"], encoding="utf-8")
        written += [trials_path, summary_path]
    if args.format in ("svg", "both"):
        path = out / "montecarlo.svg"
        path.write_text(body["svg"], encoding="utf-8")
        written.append(path)
    for path in written:
        print(path)
    for s in body["summaries"]:
        median = s.get("median_cm")
        print(
            f"noise={s['noise_psd_db']} subset={s['subset']} n_ok={s['n_ok']} "
            f"median_cm={'N/A' if median is None else round(median, 3)}"
        )
    if body.get("row_failures", 0) > 0:
        print(f"row failures: {body['row_failures']}", file=sys.stderr)
        return EXIT_ROW_FAILURES
    return EXIT_OK


def cmd_show_preset(args, client) -> int:
    from .presets import scenario_preset

    scenario = scenario_preset(args.name)
    print(json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_serve(args, client) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="harmoloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    parser.add_argument("--server", default=None, help="service URL (default: in-process)")

    p = sub.add_parser("simulate", help="synthesize IQ captures from a scenario")
    _add_scenario_args(p)
    p.add_argument("--duration", type=float, default=0.02, help="capture length in seconds")
    p.add_argument("--sample-rate", type=float, default=1e6)
    p.add_argument("--tone-offset", type=float, default=100e3)
    p.add_argument("--with-baseline", action="store_true",
                   help="also write device-off captures")
    p.add_argument("--out-dir", default=".", help="directory for .cf32 + sidecar files")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("analyze", help="PSD peaks and relative gain from capture files")
    p.add_argument("captures", nargs="+", help=".cf32 files (sidecars required)")
    p.add_argument("--baseline", nargs="*", help="device-off .cf32 files for relative gain")
    p.add_argument("--fft-size", type=int, default=4096)
    p.add_argument("--tone-offset", type=float, default=100e3)
    p.add_argument("--format", choices=("csv", "svg"), default="csv")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("localize", help="recover the device position from captures")
    _add_scenario_args(p)
    p.add_argument("--captures", nargs="+", required=True, help=".cf32 files")
    p.add_argument("--tone-offset", type=float, default=100e3)
    p.add_argument("--search-box", default=None, help="x0,y0,z0,x1,y1,z1 in meters")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=cmd_localize)

    p = sub.add_parser("sweep", help="run a one-axis sweep from a spec JSON file")
    p.add_argument("--spec", required=True, help="sweep spec JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=("csv", "svg", "both"), default="csv")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("montecarlo", help="paired Monte Carlo localization study")
    _add_scenario_args(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--noise-levels", default="none",
                   help="comma-separated dBFS/Hz values, 'none' for noise off")
    p.add_argument("--subsets", default="rx1,rx2;rx1,rx2,rx3",
                   help="semicolon-separated receiver groups, e.g. 'rx1,rx2;rx1,rx2,rx3'")
    p.add_argument("--duration", type=float, default=64e-6)
    p.add_argument("--tone-offset", type=float, default=100e3)
    p.add_argument("--format", choices=("csv", "svg", "both"), default="csv")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=cmd_montecarlo)

    p = sub.add_parser("show-preset", help="print a preset scenario as JSON")
    p.add_argument("name", help=f"one of: {', '.join(PRESET_NAMES)}")
    p.set_defaults(fn=cmd_show_preset)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.fn is cmd_serve:
            return args.fn(args, None)
        with _client(args.server) as client:
            return args.fn(args, client)
    except (CliError, HarmolocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except httpx.HTTPError as exc:
        print(f"error: transport failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
