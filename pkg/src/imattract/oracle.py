"""Orbit-integration cross-check for the inner-product criterion.

Orbits are seeded on the outer rim of the tube and integrated forward with
fixed-step RK4. The verdict comes from the median contraction ratio
``d(T) / d(0)`` of the orbit-to-manifold distance.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .criterion import TubeConfig, Verdict
from .errors import DomainError, GeometryError
from .geometry import (
    Equilibrium,
    Graph,
    Implicit,
    ManifoldSpec,
    Rect,
    VectorField,
    distances_to_manifold,
    manifold_bbox,
    sample_frames,
)

MAX_SEEDS = 64
SEEDS_PER_WORKER = 32
ESCAPE_SCALE = 4.0
CSV_MAX_ROWS = 10_000

OK, EXITED, FAILED = 0, 1, 2


@dataclass
class OrbitTrace:
    seed: tuple[float, float]
    times: np.ndarray
    points: np.ndarray
    distances: np.ndarray
    exited: bool = False
    failure: str | None = None


@dataclass
class OracleVerdict:
    verdict: Verdict
    contraction_ratio: float
    seeds_used: int
    escaped: int
    failed: int = 0
    slid: int = 0
    window: Rect | None = None
    h: float = 1e-3
    T: float = 10.0
    attract_ratio: float = 0.1
    repel_ratio: float = 10.0
    diagnostics: list[str] = field(default_factory=list)


def rk4_step(field: VectorField, p: tuple[float, float], h: float) -> tuple[float, float]:
    """One classical Runge-Kutta step; raises DomainError if any stage fails."""
    if not h > 0:
        raise ValueError("step size must be positive")
    P = np.array([p], dtype=float)
    new, ok, reason = _rk4_batch(field, P, h)
    if not ok[0]:
        raise DomainError(reason or "field evaluation failed during RK4 step", tuple(p))
    return float(new[0, 0]), float(new[0, 1])


def _rk4_batch(field: VectorField, P: np.ndarray, h: float):
    x, y = P[:, 0], P[:, 1]
    k1x, k1y, ok1, r1 = field.evaluate_many(x, y)
    k2x, k2y, ok2, r2 = field.evaluate_many(x + 0.5 * h * k1x, y + 0.5 * h * k1y)
    k3x, k3y, ok3, r3 = field.evaluate_many(x + 0.5 * h * k2x, y + 0.5 * h * k2y)
    k4x, k4y, ok4, r4 = field.evaluate_many(x + h * k3x, y + h * k3y)
    nx = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    ny = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    ok = ok1 & ok2 & ok3 & ok4 & np.isfinite(nx) & np.isfinite(ny)
    return np.stack([nx, ny], axis=1), ok, r1 or r2 or r3 or r4


def _time_grid(h: float, T: float) -> np.ndarray:
    if not (h > 0 and T > 0):
        raise ValueError("need h > 0 and T > 0")
    n = max(1, math.ceil(T / h - 1e-9))
    times = np.arange(n + 1) * h
    times[-1] = T
    return times


@dataclass
class _Batch:
    final: np.ndarray
    t_end: np.ndarray
    status: np.ndarray
    reasons: list[str | None]
    path: np.ndarray | None = None
    n_valid: np.ndarray | None = None


def _integrate_batch(field: VectorField, seeds: np.ndarray, h: float, T: float, window: Rect, record: bool) -> _Batch:
    times = _time_grid(h, T)
    steps = np.diff(times)
    P = np.array(seeds, dtype=float).reshape(-1, 2)
    n = len(P)
    status = np.full(n, OK)
    t_end = np.zeros(n)
    n_valid = np.ones(n, dtype=int)
    reasons: list[str | None] = [None] * n
    alive = window.contains(P[:, 0], P[:, 1])
    status[~alive] = EXITED
    path = np.empty((len(times), n, 2)) if record else None
    if record:
        path[0] = P
    for i, dt in enumerate(steps):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            if record:
                path = path[: i + 1]
            break
        new, ok, reason = _rk4_batch(field, P[idx], dt)
        inside = window.contains(new[:, 0], new[:, 1])
        fail = idx[~ok]
        status[fail] = FAILED
        for j in fail:
            reasons[j] = reason
        status[idx[ok & ~inside]] = EXITED
        good = idx[ok & inside]
        P[good] = new[ok & inside]
        t_end[good] = times[i + 1]
        n_valid[good] += 1
        alive[idx[~(ok & inside)]] = False
        if record:
            path[i + 1] = P
    return _Batch(P, t_end, status, reasons, path, n_valid)


def default_window(m: ManifoldSpec, margin: float) -> Rect:
    """Escape window: the tube's bounding box scaled by ESCAPE_SCALE about its center."""
    xmin, xmax, ymin, ymax = manifold_bbox(m)
    return Rect(xmin - margin, xmax + margin, ymin - margin, ymax + margin).scaled(ESCAPE_SCALE)


def integrate_orbit(
    field: VectorField,
    seed: tuple[float, float],
    h: float,
    T: float,
    m: ManifoldSpec,
    window: Rect | None = None,
) -> OrbitTrace:
    """Fixed-step RK4 from 0 to T, stopping early when the orbit leaves ``window``.

    Distances are measured to ``m`` stretched across the window (see
    :func:`extended_manifold`), so a truncated graph does not appear to end.
    """
    return integrate_orbits(field, [seed], h, T, m, window)[0]


def integrate_orbits(
    field: VectorField,
    seeds,
    h: float,
    T: float,
    m: ManifoldSpec,
    window: Rect | None = None,
) -> list[OrbitTrace]:
    """Vectorized :func:`integrate_orbit` over many seeds at once."""
    if not (h > 0 and T > 0):
        raise ValueError("h and T must be positive")
    if window is None:
        window = default_window(m, 0.25)
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    target = extended_manifold(m, window)
    batch = _integrate_batch(field, seeds, h, T, window, record=True)
    grid = _time_grid(h, T)
    traces = []
    for j, seed in enumerate(seeds):
        k = int(batch.n_valid[j])
        points = batch.path[:k, j, :].copy()
        traces.append(
            OrbitTrace(
                seed=(float(seed[0]), float(seed[1])),
                times=grid[:k],
                points=points,
                distances=distances_to_manifold(target, points),
                exited=bool(batch.status[j] == EXITED),
                failure=batch.reasons[j],
            )
        )
    return traces


def _worker_count(threads: int | None, n_seeds: int) -> int:
    """Thread count from the argument or ATTRACT_THREADS; 0 means automatic."""
    if threads is None:
        threads = int(os.environ.get("ATTRACT_THREADS", "0") or 0)
    if threads <= 0:
        threads = min(os.cpu_count() or 1, math.ceil(n_seeds / SEEDS_PER_WORKER))
    return max(1, min(threads, n_seeds))


def oracle_seeds(m: ManifoldSpec, cfg: TubeConfig) -> np.ndarray:
    """Tube points at offset ``eps_max`` on every side, at most MAX_SEEDS of them.

    Subsampling thins out base frames, never sides.
    """
    frames = sample_frames(m, cfg.n_base)
    per_frame = 1 if frames[0].minus_side is None else 2
    keep = MAX_SEEDS // per_frame
    if len(frames) > keep:
        pick = np.unique(np.round(np.linspace(0, len(frames) - 1, keep)).astype(int))
        frames = [frames[i] for i in pick]
    seeds = []
    for f in frames:
        seeds.append((f.base[0] + cfg.eps_max * f.normal[0], f.base[1] + cfg.eps_max * f.normal[1]))
        if f.minus_side is not None:
            seeds.append((f.base[0] - cfg.eps_max * f.normal[0], f.base[1] - cfg.eps_max * f.normal[1]))
    return np.array(seeds)


def extended_manifold(m: ManifoldSpec, window: Rect) -> ManifoldSpec:
    """Stretch a truncated graph or implicit curve across the escape window.

    Orbits sliding along an open manifold past its truncation would otherwise
    look like they are leaving it. Closed curves, parametric curves and
    equilibria are returned unchanged.
    """
    try:
        if isinstance(m, Graph):
            lo, hi = (window.xmin, window.xmax) if m.axis == "x" else (window.ymin, window.ymax)
            ext = Graph(m.expr, m.axis, (min(lo, m.domain[0]), max(hi, m.domain[1])))
            distances_to_manifold(ext, np.zeros((1, 2)))
            return ext
        if isinstance(m, Implicit):
            w = m.window
            ext = Implicit(
                m.F,
                Rect(min(w.xmin, window.xmin), max(w.xmax, window.xmax), min(w.ymin, window.ymin), max(w.ymax, window.ymax)),
            )
            distances_to_manifold(ext, np.zeros((1, 2)))
            return ext
    except (GeometryError, ValueError):
        return m
    return m


def oracle_verdict(
    field: VectorField,
    m: ManifoldSpec,
    cfg: TubeConfig | None = None,
    h: float = 1e-3,
    T: float = 10.0,
    window: Rect | None = None,
    attract_ratio: float = 0.1,
    repel_ratio: float = 10.0,
    threads: int | None = None,
) -> OracleVerdict:
    """Empirical attract/repel verdict from orbits seeded on the tube rim.

    Orbits that leave the window farther from the manifold than they started
    count as escaped. Orbits that leave while still approaching it (sliding
    off the ends of a truncated curve) contribute the contraction they showed
    up to that moment, extrapolated to the full horizon at the same
    exponential rate.
    """
    cfg = cfg or TubeConfig()
    if window is None:
        window = default_window(m, cfg.eps_max)
    target = extended_manifold(m, window)
    seeds = oracle_seeds(m, cfg)
    workers = _worker_count(threads, len(seeds))
    chunks = np.array_split(seeds, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(lambda c: _integrate_batch(field, c, h, T, window, False), chunks))
    else:
        batches = [_integrate_batch(field, c, h, T, window, False) for c in chunks]
    final = np.vstack([b.final for b in batches])
    t_end = np.concatenate([b.t_end for b in batches])
    status = np.concatenate([b.status for b in batches])
    reasons = [r for b in batches for r in b.reasons]

    d0 = distances_to_manifold(target, seeds)
    d1 = distances_to_manifold(target, final)
    ratios = []
    escaped = slid = 0
    diagnostics = []
    failed = int(np.sum(status == FAILED))
    for k in range(len(seeds)):
        if status[k] == FAILED or d0[k] <= 0:
            continue
        if status[k] == EXITED:
            if d1[k] > d0[k]:
                escaped += 1
                ratios.append(math.inf)
                continue
            slid += 1
            if t_end[k] <= 0:
                continue
            ratios.append(math.exp(math.log(max(d1[k], 1e-300) / d0[k]) * T / t_end[k]))
        else:
            ratios.append(d1[k] / d0[k])
    n = len(seeds)
    if failed:
        first = next(r for r in reasons if r)
        diagnostics.append(f"{failed} of {n} orbits failed: {first}")
    ratio = float(np.median(ratios)) if ratios else math.nan
    if failed > 0.5 * n or not ratios:
        verdict = Verdict.INCONCLUSIVE
    elif escaped > 0.5 * n or ratio > repel_ratio:
        verdict = Verdict.REPULSIVE
    elif ratio < attract_ratio:
        verdict = Verdict.ATTRACTIVE
    else:
        verdict = Verdict.INCONCLUSIVE
    return OracleVerdict(
        verdict,
        ratio,
        n,
        escaped,
        failed,
        slid,
        window,
        h,
        T,
        attract_ratio,
        repel_ratio,
        diagnostics,
    )


_ALLOWED = {
    Verdict.ATTRACTIVE: {Verdict.ATTRACTIVE},
    Verdict.REPULSIVE: {Verdict.REPULSIVE},
    Verdict.NEUTRAL: {Verdict.INCONCLUSIVE},
    Verdict.INDEFINITE: {Verdict.INCONCLUSIVE, Verdict.REPULSIVE},
    Verdict.MIXED: {Verdict.INCONCLUSIVE, Verdict.REPULSIVE},
}


def consistent(criterion: Verdict, oracle: Verdict) -> bool:
    """Whether an oracle verdict is compatible with a criterion verdict."""
    return oracle in _ALLOWED.get(criterion, set())


def write_trace_csv(trace: OrbitTrace, out: TextIO, max_rows: int = CSV_MAX_ROWS) -> None:
    """Columns t, x, y, dist at 6 significant digits, subsampled to ``max_rows``."""
    n = len(trace.times)
    idx = np.arange(n)
    if n > max_rows:
        idx = np.unique(np.round(np.linspace(0, n - 1, max_rows)).astype(int))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t", "x", "y", "dist"])
    for i in idx:
        w.writerow([f"{trace.times[i]:.6g}", f"{trace.points[i, 0]:.6g}", f"{trace.points[i, 1]:.6g}", f"{trace.distances[i]:.6g}"])


def trace_csv(trace: OrbitTrace, max_rows: int = CSV_MAX_ROWS) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf, max_rows)
    return buf.getvalue()
