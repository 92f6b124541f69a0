"""Manifolds, normal/tangent frames along them, and point-to-manifold distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import DomainError, EmptyManifold, GeometryError, SingularFrame
from .expr import (
    Binary,
    Const,
    CURVE_VARIABLES,
    DualValue,
    Expr,
    FIELD_VARIABLES,
    Unary,
    Var,
    evaluate_arrays,
    evaluate_dual_many,
    evaluate_many,
    free_variables,
    parse,
    substitute,
)

DEFAULT_EXTENT = (-3.0, 3.0)
GRID_CELLS = 256
POLYLINE_SEGMENTS = 2048
MIN_POLYLINE_SEGMENTS = 1024
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Rect:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"rectangle bounds must be finite: {vals}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"empty rectangle: {vals}")

    @classmethod
    def square(cls, lo: float, hi: float) -> "Rect":
        return cls(lo, hi, lo, hi)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, x, y):
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)

    def expanded(self, margin: float) -> "Rect":
        return Rect(self.xmin - margin, self.xmax + margin, self.ymin - margin, self.ymax + margin)

    def scaled(self, factor: float) -> "Rect":
        """Scale about the center."""
        cx = 0.5 * (self.xmin + self.xmax)
        cy = 0.5 * (self.ymin + self.ymax)
        hw = 0.5 * self.width * factor
        hh = 0.5 * self.height * factor
        return Rect(cx - hw, cx + hw, cy - hh, cy + hh)

    def as_list(self) -> list[float]:
        return [self.xmin, self.xmax, self.ymin, self.ymax]


# -- vector field ----------------------------------------------------------


@dataclass(frozen=True)
class VectorField:
    fx: Expr
    fy: Expr

    def __post_init__(self):
        extra = (free_variables(self.fx) | free_variables(self.fy)) - set(FIELD_VARIABLES)
        if extra:
            raise ValueError(f"vector field may only use x and y, got {sorted(extra)}")

    @classmethod
    def from_text(cls, fx: str, fy: str) -> "VectorField":
        return cls(parse(fx), parse(fy))

    def evaluate_many(self, x, y):
        """Return ``(fx, fy, ok, reason)`` evaluated elementwise."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            x, y = np.broadcast_arrays(x, y)
        env = {"x": x, "y": y}
        u, ok_u, r_u = evaluate_arrays(self.fx, env, x.shape)
        v, ok_v, r_v = evaluate_arrays(self.fy, env, x.shape)
        return u, v, ok_u & ok_v, r_u or r_v

    def at(self, x: float, y: float) -> tuple[float, float]:
        u, v, ok, reason = self.evaluate_many(x, y)
        if not ok:
            raise DomainError(reason or "evaluation failed", (x, y))
        return float(u), float(v)

    def negated(self) -> "VectorField":
        return VectorField(Unary("neg", self.fx), Unary("neg", self.fy))

    def scaled(self, c: float) -> "VectorField":
        return VectorField(Binary("*", Const(c), self.fx), Binary("*", Const(c), self.fy))


# -- manifolds -------------------------------------------------------------


def _check_interval(lo: float, hi: float, what: str) -> None:
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"{what} must be a finite nonempty interval, got [{lo}, {hi}]")


@dataclass(frozen=True)
class Equilibrium:
    px: float
    py: float


@dataclass(frozen=True)
class Graph:
    """``y = g(x)`` when ``axis == "x"``, otherwise ``x = h(y)``."""

    expr: Expr
    axis: str = "x"
    domain: tuple[float, float] = DEFAULT_EXTENT

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError(f"graph axis must be 'x' or 'y', got {self.axis!r}")
        _check_interval(*self.domain, "graph domain")
        extra = free_variables(self.expr) - {self.axis}
        if extra:
            raise ValueError(f"graph over {self.axis} cannot use {sorted(extra)}")


@dataclass(frozen=True)
class Implicit:
    F: Expr
    window: Rect = Rect(*DEFAULT_EXTENT, *DEFAULT_EXTENT)

    def __post_init__(self):
        extra = free_variables(self.F) - set(FIELD_VARIABLES)
        if extra:
            raise ValueError(f"implicit curve may only use x and y, got {sorted(extra)}")


@dataclass(frozen=True)
class Parametric:
    cx: Expr
    cy: Expr
    t_range: tuple[float, float]
    closed: bool = False

    def __post_init__(self):
        _check_interval(*self.t_range, "t_range")
        extra = (free_variables(self.cx) | free_variables(self.cy)) - set(CURVE_VARIABLES)
        if extra:
            raise ValueError(f"parametric curve may only use t, got {sorted(extra)}")
        if self.closed:
            p0, _ = _curve_points(self, np.array([self.t_range[0], self.t_range[1]]))
            if math.hypot(*(p0[1] - p0[0])) > 1e-9:
                raise ValueError("closed parametric curve endpoints do not coincide")


ManifoldSpec = Union[Equilibrium, Graph, Implicit, Parametric]


@dataclass(frozen=True)
class Frame:
    """Point on a manifold with unit tangent and unit normal (tangent turned +90 degrees).

    ``plus_side`` names the side the normal points into; ``minus_side`` the
    opposite one, or None for equilibria where every direction is a normal.
    """

    base: tuple[float, float]
    tangent: tuple[float, float]
    normal: tuple[float, float]
    arc_param: float
    plus_side: str = "plus"
    minus_side: str | None = "minus"


@dataclass
class FrameSampling:
    frames: list[Frame]
    skipped: list[tuple[float, float]] = field(default_factory=list)


# -- parametric curve helpers (Graph and Parametric) -----------------------


def _param_range(m: Graph | Parametric) -> tuple[float, float]:
    return m.domain if isinstance(m, Graph) else m.t_range


def _curve_eval(m: Graph | Parametric, s: np.ndarray):
    """Positions and derivatives along the curve parameter.

    Returns ``(P, dP, ok)`` with ``P`` and ``dP`` of shape (N, 2).
    """
    s = np.asarray(s, dtype=float)
    seed = DualValue(s, np.ones_like(s), np.zeros_like(s))
    if isinstance(m, Graph):
        d, ok, _ = evaluate_dual_many(m.expr, {m.axis: seed})
        one = np.ones_like(s)
        if m.axis == "x":
            P = np.stack([s, d.value], axis=1)
            dP = np.stack([one, d.dx], axis=1)
        else:
            P = np.stack([d.value, s], axis=1)
            dP = np.stack([d.dx, one], axis=1)
        return P, dP, ok
    dx, okx, _ = evaluate_dual_many(m.cx, {"t": seed})
    dy, oky, _ = evaluate_dual_many(m.cy, {"t": seed})
    return np.stack([dx.value, dy.value], axis=1), np.stack([dx.dx, dy.dx], axis=1), okx & oky


def _curve_points(m: Graph | Parametric, s: np.ndarray):
    s = np.asarray(s, dtype=float)
    if isinstance(m, Graph):
        v, ok, _ = evaluate_many(m.expr, {m.axis: s})
        P = np.stack([s, v], axis=1) if m.axis == "x" else np.stack([v, s], axis=1)
        return P, ok
    x, okx, _ = evaluate_many(m.cx, {"t": s})
    y, oky, _ = evaluate_many(m.cy, {"t": s})
    return np.stack([x, y], axis=1), okx & oky


def _signed_area(P: np.ndarray) -> float:
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.hypot(v[:, 0], v[:, 1])
    with np.errstate(all="ignore"):
        return v / n[:, None], n


def _rot90(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[:, 1], v[:, 0]], axis=1)


def _arc_targets(length: float, n: int, closed: bool) -> np.ndarray:
    if closed:
        return length * np.arange(n) / n
    if n == 1:
        return np.array([0.5 * length])
    return length * np.arange(n) / (n - 1)


def _frames_curve(m: Graph | Parametric, n_base: int) -> FrameSampling:
    lo, hi = _param_range(m)
    closed = isinstance(m, Parametric) and m.closed
    s_dense = np.linspace(lo, hi, 4 * POLYLINE_SEGMENTS + 1)
    P, ok = _curve_points(m, s_dense)
    if not ok.all():
        raise GeometryError("curve cannot be evaluated over its whole parameter range")
    seg = np.hypot(*np.diff(P, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] <= 0:
        raise EmptyManifold("curve has zero length")
    targets = _arc_targets(cum[-1], n_base, closed)
    params = np.interp(targets, cum, s_dense)
    base, deriv, ok = _curve_eval(m, params)
    tangent, speed = _unit(deriv)
    normal = _rot90(tangent)
    if closed:
        plus, minus = ("inward", "outward") if _signed_area(P[:-1]) > 0 else ("outward", "inward")
    else:
        plus, minus = "plus", "minus"
    result = FrameSampling([])
    for i in range(len(params)):
        if not ok[i] or not speed[i] > 0 or not np.isfinite(speed[i]):
            result.skipped.append((float(base[i, 0]), float(base[i, 1])))
            continue
        result.frames.append(
            Frame(
                (float(base[i, 0]), float(base[i, 1])),
                (float(tangent[i, 0]), float(tangent[i, 1])),
                (float(normal[i, 0]), float(normal[i, 1])),
                float(targets[i]),
                plus,
                minus,
            )
        )
    return result


# -- implicit curves -------------------------------------------------------

# edges of a cell: 0 bottom (c0-c1), 1 right (c1-c2), 2 top (c3-c2), 3 left (c0-c3)
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))
_CORNER_EDGES = ((0, 3), (0, 1), (1, 2), (2, 3))


@dataclass(frozen=True)
class _Chain:
    points: np.ndarray
    closed: bool


def _grad(F: Expr, X: np.ndarray, Y: np.ndarray):
    d, ok, _ = evaluate_dual_many(
        F, {"x": DualValue(X, 1.0, 0.0), "y": DualValue(Y, 0.0, 1.0)}
    )
    return d, ok


def project_to_zero_set(F: Expr, P: np.ndarray, iters: int = 40, tol: float = 1e-13):
    """Newton projection of points onto ``F = 0`` along the gradient.

    Returns ``(points, ok)`` where ``ok`` marks points that converged to
    ``|F| <= MEMBERSHIP_TOL`` with a nonzero gradient.
    """
    X = np.array(P[:, 0], dtype=float)
    Y = np.array(P[:, 1], dtype=float)
    for _ in range(iters):
        d, ok = _grad(F, X, Y)
        g2 = d.dx * d.dx + d.dy * d.dy
        good = ok & (g2 > 0)
        with np.errstate(all="ignore"):
            step = np.where(good, d.value / np.where(good, g2, 1.0), 0.0)
        X = X - step * np.where(good, d.dx, 0.0)
        Y = Y - step * np.where(good, d.dy, 0.0)
        if np.all(~good | (np.abs(d.value) <= tol)):
            break
    d, ok = _grad(F, X, Y)
    g2 = d.dx * d.dx + d.dy * d.dy
    ok = ok & (g2 > 0) & (np.abs(d.value) <= MEMBERSHIP_TOL)
    return np.stack([X, Y], axis=1), ok


def marching_squares(F: Expr, window: Rect, cells: int = GRID_CELLS) -> list[_Chain]:
    """Zero set of ``F`` over ``window`` as ordered polylines (unrefined)."""
    xs = np.linspace(window.xmin, window.xmax, cells + 1)
    ys = np.linspace(window.ymin, window.ymax, cells + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    V, ok, _ = evaluate_many(F, {"x": X, "y": Y})
    V = np.where(ok, V, np.nan)
    inside = V >= 0
    c0, c1, c2, c3 = inside[:-1, :-1], inside[1:, :-1], inside[1:, 1:], inside[:-1, 1:]
    case = c0 * 1 + c1 * 2 + c2 * 4 + c3 * 8
    valid = ~(np.isnan(V[:-1, :-1]) | np.isnan(V[1:, :-1]) | np.isnan(V[1:, 1:]) | np.isnan(V[:-1, 1:]))
    active = np.argwhere(valid & (case != 0) & (case != 15))
    nv = cells + 1
    voff = nv * nv

    def edge_id(i: int, j: int, e: int) -> int:
        if e == 0:
            return i * nv + j
        if e == 2:
            return i * nv + j + 1
        if e == 1:
            return voff + (i + 1) * nv + j
        return voff + i * nv + j

    corner_ij = ((0, 0), (1, 0), (1, 1), (0, 1))
    positions: dict[int, tuple[float, float]] = {}
    segments: list[tuple[int, int]] = []
    for i, j in active:
        i, j = int(i), int(j)
        vals = [V[i + a, j + b] for a, b in corner_ij]
        ins = [v >= 0 for v in vals]
        crossing = [e for e, (a, b) in enumerate(_EDGE_CORNERS) if ins[a] != ins[b]]
        for e in crossing:
            eid = edge_id(i, j, e)
            if eid not in positions:
                a, b = _EDGE_CORNERS[e]
                va, vb = vals[a], vals[b]
                frac = va / (va - vb)
                (ia, ja), (ib, jb) = corner_ij[a], corner_ij[b]
                xa, ya = xs[i + ia], ys[j + ja]
                xb, yb = xs[i + ib], ys[j + jb]
                positions[eid] = (xa + frac * (xb - xa), ya + frac * (yb - ya))
        if len(crossing) == 2:
            segments.append((edge_id(i, j, crossing[0]), edge_id(i, j, crossing[1])))
        elif len(crossing) == 4:
            center_in = sum(vals) / 4.0 >= 0
            for k in range(4):
                if ins[k] != center_in:
                    ea, eb = _CORNER_EDGES[k]
                    segments.append((edge_id(i, j, ea), edge_id(i, j, eb)))

    touching: dict[int, list[int]] = {}
    for k, (a, b) in enumerate(segments):
        touching.setdefault(a, []).append(k)
        touching.setdefault(b, []).append(k)
    used = [False] * len(segments)

    def walk(start_edge: int, seg: int) -> tuple[list[int], bool]:
        edges = [start_edge]
        current = start_edge
        while seg is not None and not used[seg]:
            used[seg] = True
            a, b = segments[seg]
            current = b if a == current else a
            edges.append(current)
            seg = next((s for s in touching[current] if not used[s]), None)
        closed = len(edges) > 2 and edges[-1] == edges[0]
        if closed:
            edges.pop()
        return edges, closed

    chains = []
    for edge in sorted(e for e, segs in touching.items() if len(segs) == 1):
        seg = touching[edge][0]
        if not used[seg]:
            edges, closed = walk(edge, seg)
            chains.append((edges, closed))
    for k in range(len(segments)):
        if not used[k]:
            edges, closed = walk(segments[k][0], k)
            chains.append((edges, closed))
    return [_Chain(np.array([positions[e] for e in edges], dtype=float), closed) for edges, closed in chains]


def _dedupe(P: np.ndarray, closed: bool, scale: float) -> np.ndarray:
    keep = np.ones(len(P), dtype=bool)
    if len(P) > 1:
        keep[1:] = np.hypot(*np.diff(P, axis=0).T) > 1e-12 * scale
    P = P[keep]
    if closed and len(P) > 1 and math.hypot(*(P[-1] - P[0])) <= 1e-12 * scale:
        P = P[:-1]
    return P


@lru_cache(maxsize=64)
def _implicit_chains(m: Implicit) -> tuple[_Chain, ...]:
    raw = marching_squares(m.F, m.window)
    scale = max(m.window.width, m.window.height)
    chains = []
    for ch in raw:
        P, ok = project_to_zero_set(m.F, ch.points)
        P = _dedupe(P[ok], ch.closed, scale)
        if len(P) >= 2:
            chains.append(_Chain(P, ch.closed and len(P) >= 3))
    if not chains:
        raise EmptyManifold(f"no zero set of F found in window {m.window.as_list()}")
    return tuple(chains)


def _chain_segments(ch: _Chain) -> np.ndarray:
    P = np.vstack([ch.points, ch.points[:1]]) if ch.closed else ch.points
    return P


def _frames_implicit(m: Implicit, n_base: int) -> FrameSampling:
    chains = _implicit_chains(m)
    polys = [_chain_segments(ch) for ch in chains]
    lengths = [float(np.sum(np.hypot(*np.diff(P, axis=0).T))) for P in polys]
    offsets = np.concatenate([[0.0], np.cumsum(lengths)])
    total = offsets[-1]
    targets = total * (np.arange(n_base) + 0.5) / n_base
    pts = np.empty((n_base, 2))
    chain_dir = np.empty((n_base, 2))
    which = np.searchsorted(offsets, targets, side="right") - 1
    which = np.clip(which, 0, len(polys) - 1)
    for k in range(n_base):
        P = polys[which[k]]
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(P, axis=0).T))])
        s = targets[k] - offsets[which[k]]
        j = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(P) - 2))
        frac = (s - cum[j]) / (cum[j + 1] - cum[j])
        pts[k] = P[j] + frac * (P[j + 1] - P[j])
        chain_dir[k] = P[j + 1] - P[j]
    base, ok = project_to_zero_set(m.F, pts)
    d, ok_g = _grad(m.F, base[:, 0], base[:, 1])
    normal, gnorm = _unit(np.stack([d.dx, d.dy], axis=1))
    tangent = np.stack([normal[:, 1], -normal[:, 0]], axis=1)
    areas = [_signed_area(ch.points) if ch.closed else 0.0 for ch in chains]
    result = FrameSampling([])
    for k in range(n_base):
        if not (ok[k] and ok_g[k] and gnorm[k] > 0):
            result.skipped.append((float(base[k, 0]), float(base[k, 1])))
            continue
        ch = chains[which[k]]
        if ch.closed:
            ccw = np.sign(areas[which[k]]) * np.sign(tangent[k] @ chain_dir[k]) > 0
            plus, minus = ("inward", "outward") if ccw else ("outward", "inward")
        else:
            plus, minus = "plus", "minus"
        result.frames.append(
            Frame(
                (float(base[k, 0]), float(base[k, 1])),
                (float(tangent[k, 0]), float(tangent[k, 1])),
                (float(normal[k, 0]), float(normal[k, 1])),
                float(targets[k]),
                plus,
                minus,
            )
        )
    return result


def _frames_equilibrium(m: Equilibrium, n_base: int) -> FrameSampling:
    frames = []
    for i in range(n_base):
        theta = 2.0 * math.pi * i / n_base
        c, s = math.cos(theta), math.sin(theta)
        frames.append(Frame((m.px, m.py), (s, -c), (c, s), theta, "radial", None))
    return FrameSampling(frames)


def sample_frames_detailed(m: ManifoldSpec, n_base: int) -> FrameSampling:
    """Frames plus the base points skipped because the frame was singular."""
    if n_base < 1:
        raise ValueError("n_base must be at least 1")
    if isinstance(m, Equilibrium):
        return _frames_equilibrium(m, n_base)
    if isinstance(m, Implicit):
        return _frames_implicit(m, n_base)
    return _frames_curve(m, n_base)


def sample_frames(m: ManifoldSpec, n_base: int) -> list[Frame]:
    """``n_base`` frames along the manifold, ordered by ``arc_param``.

    Equilibria yield ``n_base`` frames at the point with normals spread
    uniformly over the circle. Singular points are skipped; if every point
    is singular a SingularFrame error is raised.
    """
    sampling = sample_frames_detailed(m, n_base)
    if not sampling.frames:
        raise SingularFrame(sampling.skipped[0] if sampling.skipped else (math.nan, math.nan))
    return sampling.frames


# -- distance --------------------------------------------------------------


@lru_cache(maxsize=64)
def _dense_curve(m: Graph | Parametric) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = _param_range(m)
    s = np.linspace(lo, hi, POLYLINE_SEGMENTS + 1)
    P, ok = _curve_points(m, s)
    if not ok.all():
        raise GeometryError("curve cannot be evaluated over its whole parameter range")
    return s, P


@lru_cache(maxsize=64)
def _dense_implicit(m: Implicit) -> tuple[np.ndarray, ...]:
    polys = [_chain_segments(ch) for ch in _implicit_chains(m)]
    while sum(len(P) - 1 for P in polys) < MIN_POLYLINE_SEGMENTS:
        refined = []
        for P in polys:
            mid, ok = project_to_zero_set(m.F, 0.5 * (P[:-1] + P[1:]))
            mid = np.where(ok[:, None], mid, 0.5 * (P[:-1] + P[1:]))
            Q = np.empty((2 * len(P) - 1, 2))
            Q[0::2] = P
            Q[1::2] = mid
            refined.append(Q)
        polys = refined
    return tuple(polys)


def _nearest_on_polyline(P: np.ndarray, Q: np.ndarray, chunk: int = 1 << 22):
    """For each query point, nearest segment index, segment fraction and distance."""
    A = P[:-1]
    D = P[1:] - P[:-1]
    L2 = np.einsum("ij,ij->i", D, D)
    L2 = np.where(L2 > 0, L2, 1.0)
    n = len(Q)
    best_d = np.empty(n)
    best_k = np.empty(n, dtype=int)
    best_u = np.empty(n)
    step = max(1, chunk // max(1, len(A)))
    for lo in range(0, n, step):
        q = Q[lo : lo + step]
        rx = q[:, 0:1] - A[None, :, 0]
        ry = q[:, 1:2] - A[None, :, 1]
        u = np.clip((rx * D[None, :, 0] + ry * D[None, :, 1]) / L2[None, :], 0.0, 1.0)
        ex = rx - u * D[None, :, 0]
        ey = ry - u * D[None, :, 1]
        d2 = ex * ex + ey * ey
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(q))
        best_k[lo : lo + step] = k
        best_u[lo : lo + step] = u[rows, k]
        best_d[lo : lo + step] = np.sqrt(d2[rows, k])
    return best_k, best_u, best_d


def _refine_curve(m: Graph | Parametric, s: np.ndarray, k: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Bisection on d/ds |c(s) - q|^2 over the segments around the nearest one."""
    a = s[np.maximum(k - 4, 0)]
    b = s[np.minimum(k + 5, len(s) - 1)]

    def g(t):
        P, dP, ok = _curve_eval(m, t)
        r = P - Q
        return np.einsum("ij,ij->i", r, dP), np.hypot(r[:, 0], r[:, 1]), ok

    ga, da, _ = g(a)
    gb, db, _ = g(b)
    best = np.minimum(da, db)
    bracket = (ga < 0) & (gb > 0)
    if bracket.any():
        lo, hi = a.copy(), b.copy()
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm, _, _ = g(mid)
            left = gm > 0
            hi = np.where(bracket & left, mid, hi)
            lo = np.where(bracket & ~left, mid, lo)
        _, dm, okm = g(0.5 * (lo + hi))
        best = np.where(bracket & okm, np.minimum(best, dm), best)
    return best


def _refine_implicit(m: Implicit, P: np.ndarray, k: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Bisection along the polyline arc, with every trial point projected onto F = 0."""
    cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(P, axis=0).T))])
    nseg = len(P) - 1

    def g(sigma):
        j = np.clip(np.searchsorted(cum, sigma, side="right") - 1, 0, nseg - 1)
        span = np.where(cum[j + 1] > cum[j], cum[j + 1] - cum[j], 1.0)
        frac = (sigma - cum[j]) / span
        direction = P[j + 1] - P[j]
        c, ok = project_to_zero_set(m.F, P[j] + frac[:, None] * direction)
        d, okg = _grad(m.F, c[:, 0], c[:, 1])
        t = np.stack([d.dy, -d.dx], axis=1)
        t *= np.where(np.einsum("ij,ij->i", t, direction) < 0, -1.0, 1.0)[:, None]
        r = c - Q
        return np.einsum("ij,ij->i", r, t), np.hypot(r[:, 0], r[:, 1]), ok & okg

    a = cum[np.maximum(k - 4, 0)]
    b = cum[np.minimum(k + 5, nseg)]
    ga, da, oka = g(a)
    gb, db, okb = g(b)
    best = np.minimum(np.where(oka, da, np.inf), np.where(okb, db, np.inf))
    bracket = oka & okb & (ga < 0) & (gb > 0)
    if bracket.any():
        lo, hi = a.copy(), b.copy()
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm, _, _ = g(mid)
            left = gm > 0
            hi = np.where(bracket & left, mid, hi)
            lo = np.where(bracket & ~left, mid, lo)
        _, dm, okm = g(0.5 * (lo + hi))
        best = np.where(bracket & okm, np.minimum(best, dm), best)
    return best


def distances_to_manifold(m: ManifoldSpec, points) -> np.ndarray:
    """Vectorized :func:`distance_to_manifold` over an (N, 2) array."""
    Q = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.isfinite(Q).all():
        raise ValueError("query points must be finite")
    if isinstance(m, Equilibrium):
        return np.hypot(Q[:, 0] - m.px, Q[:, 1] - m.py)
    if isinstance(m, Implicit):
        polys = _dense_implicit(m)
        best = np.full(len(Q), np.inf)
        piece = np.zeros(len(Q), dtype=int)
        seg = np.zeros(len(Q), dtype=int)
        for i, P in enumerate(polys):
            k, _, d = _nearest_on_polyline(P, Q)
            better = d < best
            best = np.where(better, d, best)
            piece = np.where(better, i, piece)
            seg = np.where(better, k, seg)
        out = best.copy()
        for i, P in enumerate(polys):
            sel = piece == i
            if sel.any():
                refined = _refine_implicit(m, P, seg[sel], Q[sel])
                out[sel] = np.where(np.isfinite(refined), refined, best[sel])
        return out
    s, P = _dense_curve(m)
    k, _, _ = _nearest_on_polyline(P, Q)
    return _refine_curve(m, s, k, Q)


def distance_to_manifold(m: ManifoldSpec, p: tuple[float, float]) -> float:
    """Euclidean distance from ``p`` to the (truncated) manifold."""
    return float(distances_to_manifold(m, [p])[0])


def manifold_polylines(m: ManifoldSpec) -> list[tuple[np.ndarray, bool]]:
    """Drawable polylines as ``(points, closed)`` pairs; an equilibrium is a single point."""
    if isinstance(m, Equilibrium):
        return [(np.array([[m.px, m.py]]), False)]
    if isinstance(m, Implicit):
        return [(ch.points, ch.closed) for ch in _implicit_chains(m)]
    _, P = _dense_curve(m)
    closed = isinstance(m, Parametric) and m.closed
    return [(P[:-1] if closed else P, closed)]


def manifold_bbox(m: ManifoldSpec) -> tuple[float, float, float, float]:
    """``(xmin, xmax, ymin, ymax)``; may be degenerate (e.g. a point or a line)."""
    P = np.vstack([p for p, _ in manifold_polylines(m)])
    return float(P[:, 0].min()), float(P[:, 0].max()), float(P[:, 1].min()), float(P[:, 1].max())


def is_closed(m: ManifoldSpec) -> bool:
    if isinstance(m, Parametric):
        return m.closed
    if isinstance(m, Implicit):
        return all(ch.closed for ch in _implicit_chains(m))
    return False


# -- rotations -------------------------------------------------------------


def _rotate_pair(a: Expr, b: Expr, phi: float) -> tuple[Expr, Expr]:
    c, s = Const(math.cos(phi)), Const(math.sin(phi))
    return (
        Binary("-", Binary("*", c, a), Binary("*", s, b)),
        Binary("+", Binary("*", s, a), Binary("*", c, b)),
    )


def rotate_field(f: VectorField, phi: float) -> VectorField:
    """Push ``f`` forward by the rotation of angle ``phi`` about the origin."""
    back = dict(zip(("x", "y"), _rotate_pair(Var("x"), Var("y"), -phi)))
    return VectorField(*_rotate_pair(substitute(f.fx, back), substitute(f.fy, back), phi))


def rotate_manifold(m: ManifoldSpec, phi: float) -> ManifoldSpec:
    """Image of ``m`` under rotation by ``phi``; graphs become parametric curves."""
    if isinstance(m, Equilibrium):
        c, s = math.cos(phi), math.sin(phi)
        return Equilibrium(c * m.px - s * m.py, s * m.px + c * m.py)
    if isinstance(m, Implicit):
        back = dict(zip(("x", "y"), _rotate_pair(Var("x"), Var("y"), -phi)))
        w = m.window
        corners = np.array([[w.xmin, w.ymin], [w.xmax, w.ymin], [w.xmax, w.ymax], [w.xmin, w.ymax]])
        c, s = math.cos(phi), math.sin(phi)
        rc = corners @ np.array([[c, s], [-s, c]])
        window = Rect(rc[:, 0].min(), rc[:, 0].max(), rc[:, 1].min(), rc[:, 1].max())
        return Implicit(substitute(m.F, back), window)
    if isinstance(m, Graph):
        t = Var("t")
        g = substitute(m.expr, {m.axis: t})
        cx, cy = (t, g) if m.axis == "x" else (g, t)
        return Parametric(*_rotate_pair(cx, cy, phi), m.domain, False)
    return Parametric(*_rotate_pair(m.cx, m.cy, phi), m.t_range, m.closed)
