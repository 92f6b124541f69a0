"""End-to-end orchestration: invariance gate, tube criterion, orbit oracle, report."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .config import AnalysisConfig, ManifoldEntry
from .criterion import ManifoldClassification, TubeSample, classify_manifold
from .errors import ImattractError
from .geometry import Rect, distances_to_manifold
from .invariance import InvarianceReport, invariance_residual
from .oracle import (
    EXITED,
    OracleVerdict,
    OrbitTrace,
    _integrate_batch,
    _time_grid,
    consistent,
    default_window,
    extended_manifold,
    oracle_seeds,
    oracle_verdict,
)

TOOL_NAME = "imattract"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_INVARIANT = 2

CLAIM_SCOPE = "sampled tube only: offsets in [{eps_min}, {eps_max}] along {n_base} normals per manifold"


@dataclass
class ManifoldResult:
    entry: ManifoldEntry
    invariance: InvarianceReport
    classification: ManifoldClassification | None = None
    oracle: OracleVerdict | None = None
    error: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def agreement(self) -> bool | None:
        if self.classification is None or self.oracle is None:
            return None
        return consistent(self.classification.overall, self.oracle.verdict)


@dataclass
class AnalysisResult:
    config: AnalysisConfig
    manifolds: list[ManifoldResult]
    exit_code: int
    total_seconds: float = 0.0

    def report(self) -> dict[str, Any]:
        return build_report(self)


def oracle_window(cfg: AnalysisConfig, entry: ManifoldEntry) -> Rect:
    return cfg.oracle.window or default_window(entry.spec, cfg.tube.eps_max)


def run_analysis(cfg: AnalysisConfig, force: bool | None = None, run_oracle: bool = True) -> AnalysisResult:
    """Run every manifold through the pipeline.

    A manifold that fails the invariance check is not classified unless
    ``force`` (or ``cfg.force``) is set; the exit code is then 2.
    """
    force = cfg.force if force is None else force
    started = time.perf_counter()
    results = []
    gate_failed = errored = False
    for entry in cfg.manifolds:
        t0 = time.perf_counter()
        inv = invariance_residual(cfg.field, entry.spec, cfg.invariance.n_points, cfg.invariance.tol)
        res = ManifoldResult(entry, inv, timings={"invariance": time.perf_counter() - t0})
        results.append(res)
        if not inv.passed:
            gate_failed = True
            if not force:
                continue
        try:
            t0 = time.perf_counter()
            res.classification = classify_manifold(cfg.field, entry.spec, cfg.tube)
            res.timings["criterion"] = time.perf_counter() - t0
            if run_oracle:
                t0 = time.perf_counter()
                o = cfg.oracle
                res.oracle = oracle_verdict(
                    cfg.field, entry.spec, cfg.tube, o.h, o.T, oracle_window(cfg, entry), o.attract_ratio, o.repel_ratio
                )
                res.timings["oracle"] = time.perf_counter() - t0
        except ImattractError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
            errored = True
    if errored:
        code = EXIT_ERROR
    elif gate_failed and not force:
        code = EXIT_NOT_INVARIANT
    else:
        code = EXIT_OK
    return AnalysisResult(cfg, results, code, time.perf_counter() - started)


def _num(x: float) -> float | str | None:
    """JSON-safe float: non-finite values become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _pair(p) -> list:
    return [_num(p[0]), _num(p[1])]


def _sample_dict(s: TubeSample | None) -> dict[str, Any] | None:
    if s is None:
        return None
    return {
        "base": _pair(s.frame.base),
        "arc_param": _num(s.frame.arc_param),
        "side": s.side,
        "offset": _num(s.offset),
        "point": _pair(s.point),
        "field": _pair(s.field),
        "n_hat": _pair(s.n_hat),
        "ip": _num(s.ip),
    }


def _invariance_dict(r: InvarianceReport) -> dict[str, Any]:
    return {
        "pass": r.passed,
        "max_residual": _num(r.max_residual),
        "mean_residual": _num(r.mean_residual),
        "n_points": r.n_points,
        "n_skipped": r.n_skipped,
        "tol": _num(r.tol),
        "failure": r.failure,
    }


def _criterion_dict(c: ManifoldClassification, cfg: AnalysisConfig) -> dict[str, Any]:
    t = cfg.tube
    return {
        "overall": str(c.overall),
        "per_side": {
            side: {
                "verdict": str(s.verdict),
                "min_ip": _num(s.min_ip),
                "max_ip": _num(s.max_ip),
                "n_samples": s.n_samples,
                "n_excluded": s.n_excluded,
                "witness_attract": _sample_dict(s.witness_attract),
                "witness_repel": _sample_dict(s.witness_repel),
            }
            for side, s in c.per_side.items()
        },
        "skipped_frames": [_pair(p) for p in c.skipped_frames],
        "claim_scope": CLAIM_SCOPE.format(eps_min=t.eps_min, eps_max=t.eps_max, n_base=t.n_base),
    }


def _oracle_dict(o: OracleVerdict) -> dict[str, Any]:
    return {
        "verdict": str(o.verdict),
        "contraction_ratio": _num(o.contraction_ratio),
        "seeds_used": o.seeds_used,
        "escaped": o.escaped,
        "slid": o.slid,
        "failed": o.failed,
        "h": _num(o.h),
        "T": _num(o.T),
        "window": [_num(v) for v in o.window.as_list()] if o.window else None,
        "attract_ratio": _num(o.attract_ratio),
        "repel_ratio": _num(o.repel_ratio),
        "diagnostics": list(o.diagnostics),
    }


def build_report(result: AnalysisResult) -> dict[str, Any]:
    cfg = result.config
    manifolds = []
    for r in result.manifolds:
        if r.error:
            status = "error"
        elif not r.invariance.passed:
            status = "forced" if r.classification is not None else "not_invariant"
        else:
            status = "ok"
        manifolds.append(
            {
                "name": r.entry.name,
                "kind": r.entry.kind,
                "status": status,
                "invariance": _invariance_dict(r.invariance),
                "criterion": _criterion_dict(r.classification, cfg) if r.classification else None,
                "oracle": _oracle_dict(r.oracle) if r.oracle else None,
                "agreement": r.agreement,
                "error": r.error,
            }
        )
    return {
        "tool": {"name": TOOL_NAME, "version": __version__},
        "system": cfg.system,
        "exit_code": result.exit_code,
        "config": cfg.to_dict(),
        "manifolds": manifolds,
        "timings": {
            "total_s": result.total_seconds,
            "manifolds": {r.entry.name: dict(r.timings) for r in result.manifolds},
        },
    }


def dumps_report(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def samples_csv(result: AnalysisResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["manifold", "side", "arc_param", "offset", "base_x", "base_y", "x", "y", "fx", "fy", "n_x", "n_y", "ip", "excluded"])
    for r in result.manifolds:
        if r.classification is None:
            continue
        for s in r.classification.samples:
            w.writerow(
                [
                    r.entry.name,
                    s.side,
                    repr(s.frame.arc_param),
                    repr(s.offset),
                    repr(s.frame.base[0]),
                    repr(s.frame.base[1]),
                    repr(s.point[0]),
                    repr(s.point[1]),
                    repr(s.field[0]),
                    repr(s.field[1]),
                    repr(s.n_hat[0]),
                    repr(s.n_hat[1]),
                    repr(s.ip),
                    s.excluded or "",
                ]
            )
    return buf.getvalue()


def sample_traces(cfg: AnalysisConfig, entry: ManifoldEntry, count: int = 8, max_points: int = 400) -> list[OrbitTrace]:
    """A handful of thinned-out oracle orbits for drawing."""
    seeds = oracle_seeds(entry.spec, cfg.tube)
    pick = np.unique(np.round(np.linspace(0, len(seeds) - 1, min(count, len(seeds)))).astype(int))
    seeds = seeds[pick]
    window = oracle_window(cfg, entry)
    target = extended_manifold(entry.spec, window)
    batch = _integrate_batch(cfg.field, seeds, cfg.oracle.h, cfg.oracle.T, window, record=True)
    times = _time_grid(cfg.oracle.h, cfg.oracle.T)
    traces = []
    for j, seed in enumerate(seeds):
        k = int(batch.n_valid[j])
        idx = np.unique(np.round(np.linspace(0, k - 1, min(k, max_points))).astype(int))
        pts = batch.path[idx, j, :].copy()
        traces.append(
            OrbitTrace(
                seed=(float(seed[0]), float(seed[1])),
                times=times[idx],
                points=pts,
                distances=distances_to_manifold(target, pts),
                exited=bool(batch.status[j] == EXITED),
                failure=batch.reasons[j],
            )
        )
    return traces

