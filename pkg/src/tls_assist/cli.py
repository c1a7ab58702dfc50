"""Command-line entry point: ``tls-assist process | simulate | bench | compare``.

Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 I/O failure,
5 session aborted on malformed input, 6 report shape mismatch.
"""
from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import CONFIG_ENV, ConfigError, RunConfig, load_config
from .detector_io import adapter_frames, serialize_frame, stream_session
from .harness import (
    BenchmarkReport,
    ShapeMismatchError,
    compare,
    render_delta_table,
    render_infraction_table,
    render_score_table,
    run_benchmark,
)
from .pipeline import PipelineConfig
from .sim import TRACKS, derive_seed, generate_scenario, open_loop_stream

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_ABORT = 5
EXIT_SHAPE = 6

log = logging.getLogger("tls_assist")


def ablation_configs(base: PipelineConfig, kind: str) -> dict[str, PipelineConfig | None]:
    """Rows of the light-component ablation (``tlr``) or the module study (``module``)."""
    if kind == "tlr":
        def tlr(rp: bool, sv: bool) -> PipelineConfig:
            return replace(base, enable_tlr=True, tlr=replace(base.tlr, enable_rp=rp, enable_sv=sv))

        return {"D+RP+SV": tlr(True, True), "D+RP": tlr(True, False), "D+SV": tlr(False, True), "D": tlr(False, False)}
    if kind == "module":
        return {
            "baseline": None,
            "+ TLR-only": replace(base, enable_tlr=True, enable_tsr=False),
            "+ TSR-only": replace(base, enable_tlr=False, enable_tsr=True),
            "+ TLS-Assist": replace(base, enable_tlr=True, enable_tsr=True),
        }
    raise ValueError(f"unknown ablation {kind!r}")


def _dump(obj: object) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _manifest(command: str, cfg: RunConfig, seed: int, files: Sequence[str], **extra: object) -> dict:
    return {"command": command, "version": __version__, "seed": seed, **extra, "files": list(files), "config": cfg.resolved()}


def cmd_process(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.adapter:
        refs = Path(args.input).read_text().splitlines() if args.input != "-" else sys.stdin.read().splitlines()
        source = adapter_frames(shlex.split(args.adapter), refs)
        summary = _run_session(source, args.out, cfg)
    elif args.input == "-":
        summary = _run_session(sys.stdin.buffer, args.out, cfg)
    else:
        with open(args.input, "rb") as src:
            summary = _run_session(src, args.out, cfg)
    if args.out != "-":
        manifest = _manifest("process", cfg, cfg.seed, [Path(args.out).name], input=str(args.input), session=summary.as_dict())
        Path(str(args.out) + ".manifest.json").write_text(_dump(manifest))
    print(json.dumps(summary.as_dict() | {"error_log": summary.error_log[:20]}), file=sys.stderr)
    if summary.aborted:
        log.error("session aborted: %d malformed of %d frames", summary.errors, summary.frames)
        return EXIT_ABORT
    return EXIT_OK


def _run_session(source, out: str, cfg: RunConfig):
    if out == "-":
        return stream_session(source, sys.stdout.buffer, cfg.pipeline, cfg.max_error_rate, cfg.error_window)
    with open(out, "wb") as sink:
        return stream_session(source, sink, cfg.pipeline, cfg.max_error_rate, cfg.error_window)


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if args.seed is None else args.seed
    files = []
    for i in range(args.count):
        scen_seed = derive_seed(seed, "simulate", args.track, i) % (2**31)
        noise_seed = derive_seed(seed, "simulate-noise", args.track, i) % (2**31)
        s = generate_scenario(args.track, scen_seed)
        scen_name = f"{args.track}_{i:03d}.scenario.json"
        stream_name = f"{args.track}_{i:03d}.frames.jsonl"
        (out / scen_name).write_text(_dump(s.to_dict()))
        with open(out / stream_name, "wb") as f:
            for bundle in open_loop_stream(s, cfg.noise, noise_seed):
                f.write(serialize_frame(bundle))
        files += [scen_name, stream_name]
    manifest = _manifest("simulate", cfg, seed, files, track=args.track, count=args.count)
    (out / "manifest.json").write_text(_dump(manifest))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tracks = tuple(args.track) if args.track else cfg.tracks
    routes = cfg.routes_per_track if args.routes is None else args.routes
    reps = cfg.repetitions if args.repetitions is None else args.repetitions
    seed = cfg.seed if args.seed is None else args.seed
    configs = ablation_configs(cfg.pipeline, args.ablation)
    report = run_benchmark(tracks, configs, routes, reps, seed, cfg.bench_settings, jobs=args.jobs)

    if args.ablation == "tlr":
        title, table_name = "Ablation of light-recognition components", "table_iii.txt"
    else:
        title, table_name = "Module study", "table_ii.txt"
    files = {
        "report.json": _dump(report.as_dict()),
        table_name: render_score_table(report, title),
        "table_iv.txt": render_infraction_table(report, "Mean infractions and terminations per route"),
    }
    for name, text in files.items():
        (out / name).write_text(text)
    manifest = _manifest(
        "bench", cfg, seed, list(files), ablation=args.ablation, tracks=list(tracks),
        routes_per_track=routes, repetitions=reps,
    )
    (out / "manifest.json").write_text(_dump(manifest))
    sys.stdout.write(files[table_name] + "\n" + files["table_iv.txt"])
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, cfg: RunConfig) -> int:
    a = BenchmarkReport.from_dict(json.loads(Path(args.a).read_text()))
    b = BenchmarkReport.from_dict(json.loads(Path(args.b).read_text()))
    entries = compare(a, b)
    text = render_delta_table(entries)
    if args.out:
        Path(args.out).write_text(_dump([e.as_dict() for e in entries]))
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tls-assist", description="Traffic light and sign notices for driving agents.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help=f"YAML run configuration (default: ${CONFIG_ENV})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="run the pipeline over a frame stream")
    p.add_argument("--input", required=True, help="frame stream (JSON lines), '-' for stdin")
    p.add_argument("--out", default="-", help="notice stream destination, '-' for stdout")
    p.add_argument("--adapter", help="detector command; --input then lists one sensor reference per line")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("simulate", help="write seeded scenarios and their detection streams")
    p.add_argument("--track", choices=TRACKS, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, help="default from config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="closed-loop benchmark over an ablation matrix")
    p.add_argument("--ablation", choices=("tlr", "module"), default="tlr")
    p.add_argument("--track", choices=TRACKS, action="append", help="repeatable; default from config")
    p.add_argument("--routes", type=int, help="routes per track")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="per-metric deltas between two benchmark reports")
    p.add_argument("a", help="reference report.json")
    p.add_argument("b", help="candidate report.json")
    p.add_argument("--out", help="also write the deltas as JSON")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    for name in ("count", "routes", "repetitions", "jobs"):
        v = getattr(args, name, None)
        if v is not None and v < (1 if name == "jobs" else 0):
            parser.print_usage(sys.stderr)
            print(f"tls-assist: error: --{name} out of range", file=sys.stderr)
            return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"tls-assist: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShapeMismatchError as exc:
        print(f"tls-assist: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"tls-assist: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
