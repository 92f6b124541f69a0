"""Command-line entry point.

    imattract analyze CONFIG [--force] [--svg PATH] [--samples PATH] [--report PATH]
    imattract check-invariance CONFIG
    imattract orbit CONFIG --seed X,Y [--h H] [--T T] [--manifold NAME] [--csv PATH]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    EXIT_ERROR,
    EXIT_NOT_INVARIANT,
    EXIT_OK,
    dumps_report,
    oracle_window,
    run_analysis,
    sample_traces,
    samples_csv,
)
from .config import AnalysisConfig, load_config
from .errors import ConfigError, ImattractError
from .geometry import Rect
from .invariance import invariance_residual
from .oracle import integrate_orbit, trace_csv
from .svg import render_svg, write_svg


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ImattractError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _union(rects: list[Rect]) -> Rect:
    return Rect(
        min(r.xmin for r in rects), max(r.xmax for r in rects), min(r.ymin for r in rects), max(r.ymax for r in rects)
    )


def _cmd_analyze(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    result = run_analysis(cfg, force=True if args.force else None)
    report = result.report()
    text = dumps_report(report)
    report_path = Path(args.report) if args.report else cfg.resolve(cfg.outputs.report)
    if report_path is None:
        sys.stdout.write(text)
    else:
        _write(report_path, text)
        print(f"report written to {report_path}", file=sys.stderr)

    samples_path = Path(args.samples) if args.samples else cfg.resolve(cfg.outputs.samples)
    if samples_path is not None:
        _write(samples_path, samples_csv(result))

    svg_path = Path(args.svg) if args.svg else cfg.resolve(cfg.outputs.svg)
    if svg_path is not None:
        layers = []
        for r in result.manifolds:
            samples = r.classification.samples if r.classification else []
            traces = sample_traces(cfg, r.entry) if r.classification else []
            layers.append((r.entry.spec, samples, traces))
        window = cfg.oracle.window or _union([oracle_window(cfg, r.entry) for r in result.manifolds])
        write_svg(render_svg(layers, window, cfg.field, cfg.tube.zero_tol), svg_path)

    for m in report["manifolds"]:
        line = f"{m['name']}: invariance {'pass' if m['invariance']['pass'] else 'FAIL'}"
        if m["criterion"]:
            line += f", criterion {m['criterion']['overall']}"
        if m["oracle"]:
            line += f", oracle {m['oracle']['verdict']}, agreement {str(m['agreement']).lower()}"
        if m["error"]:
            line += f", error {m['error']}"
        print(line, file=sys.stderr)
    return result.exit_code


def _cmd_check_invariance(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = {}
    ok = True
    for entry in cfg.manifolds:
        r = invariance_residual(cfg.field, entry.spec, cfg.invariance.n_points, cfg.invariance.tol)
        ok &= r.passed
        out[entry.name] = {
            "pass": r.passed,
            "max_residual": r.max_residual,
            "mean_residual": r.mean_residual,
            "n_points": r.n_points,
            "failure": r.failure,
        }
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK if ok else EXIT_NOT_INVARIANT


def _pick_manifold(cfg: AnalysisConfig, name: str | None):
    if name is None:
        return cfg.manifolds[0]
    for e in cfg.manifolds:
        if e.name == name:
            return e
    if name.isdigit() and int(name) < len(cfg.manifolds):
        return cfg.manifolds[int(name)]
    raise ConfigError(f"no manifold named {name!r}", field="manifolds")


def _seed(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}") from None
    return x, y


def _cmd_orbit(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    entry = _pick_manifold(cfg, args.manifold)
    h = cfg.oracle.h if args.h is None else args.h
    T = cfg.oracle.T if args.T is None else args.T
    if not (h > 0 and T > 0):
        raise ConfigError("--h and --T must be positive")
    trace = integrate_orbit(cfg.field, args.seed, h, T, entry.spec, oracle_window(cfg, entry))
    text = trace_csv(trace)
    if args.csv:
        _write(Path(args.csv), text)
    else:
        sys.stdout.write(text)
    if trace.failure:
        print(f"orbit stopped: {trace.failure}", file=sys.stderr)
    elif trace.exited:
        print(f"orbit left the window at t={trace.times[-1]:.6g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imattract", description="Attractiveness analysis of planar invariant manifolds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="invariance check, tube criterion and orbit oracle")
    a.add_argument("config")
    a.add_argument("--force", action="store_true", help="classify manifolds that fail the invariance check")
    a.add_argument("--svg", metavar="PATH")
    a.add_argument("--samples", metavar="PATH", help="CSV dump of every tube sample")
    a.add_argument("--report", metavar="PATH", help="report destination (default: config outputs.report or stdout)")
    a.set_defaults(func=_cmd_analyze)

    c = sub.add_parser("check-invariance", help="invariance residuals only")
    c.add_argument("config")
    c.set_defaults(func=_cmd_check_invariance)

    o = sub.add_parser("orbit", help="integrate a single orbit and print t,x,y,dist as CSV")
    o.add_argument("config")
    o.add_argument("--seed", type=_seed, required=True, metavar="X,Y")
    o.add_argument("--h", type=float)
    o.add_argument("--T", type=float)
    o.add_argument("--manifold", metavar="NAME", help="manifold used for the distance column (default: first)")
    o.add_argument("--csv", metavar="PATH")
    o.set_defaults(func=_cmd_orbit)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ImattractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
