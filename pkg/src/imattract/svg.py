"""Static phase-portrait drawings."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .criterion import TubeSample
from .errors import ImattractError
from .geometry import Equilibrium, ManifoldSpec, Rect, VectorField, manifold_polylines
from .oracle import OrbitTrace

TICK_COLORS = {"attract": "blue", "repel": "red", "zero": "gray"}
MANIFOLD_COLOR = "black"
TRACE_COLOR = "green"
FIELD_COLOR = "#c8c8c8"
FIELD_GRID = 15


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _xy(x: float, y: float) -> str:
    # SVG's y axis points down
    return f"{_fmt(x)},{_fmt(-y)}"


def tick_class(ip: float, zero_tol: float) -> str:
    if ip < -zero_tol:
        return "attract"
    if ip > zero_tol:
        return "repel"
    return "zero"


def _field_arrows(field: VectorField, window: Rect, sw: float) -> list[str]:
    xs = np.linspace(window.xmin, window.xmax, FIELD_GRID + 2)[1:-1]
    ys = np.linspace(window.ymin, window.ymax, FIELD_GRID + 2)[1:-1]
    X, Y = np.meshgrid(xs, ys)
    u, v, ok, _ = field.evaluate_many(X.ravel(), Y.ravel())
    norm = np.hypot(u, v)
    step = 0.35 * min(window.width, window.height) / FIELD_GRID
    out = []
    for x, y, a, b, n, good in zip(X.ravel(), Y.ravel(), u, v, norm, ok):
        if not good or not n > 0 or not math.isfinite(n):
            continue
        dx, dy = step * a / n, step * b / n
        out.append(
            f'<line class="field" x1="{_fmt(x - dx)}" y1="{_fmt(-(y - dy))}" x2="{_fmt(x + dx)}" y2="{_fmt(-(y + dy))}" '
            f'stroke="{FIELD_COLOR}" stroke-width="{_fmt(sw * 0.6)}" marker-end="url(#arrow)"/>'
        )
    return out


def _manifold_paths(m: ManifoldSpec, sw: float) -> list[str]:
    if isinstance(m, Equilibrium):
        return [f'<circle class="manifold" cx="{_fmt(m.px)}" cy="{_fmt(-m.py)}" r="{_fmt(3 * sw)}" fill="{MANIFOLD_COLOR}"/>']
    out = []
    for pts, closed in manifold_polylines(m):
        d = "M " + " L ".join(_xy(x, y) for x, y in pts) + (" Z" if closed else "")
        out.append(f'<path class="manifold" d="{d}" fill="none" stroke="{MANIFOLD_COLOR}" stroke-width="{_fmt(sw * 1.5)}"/>')
    return out


def _ticks(samples: Sequence[TubeSample], zero_tol: float, sw: float) -> list[str]:
    out = []
    prev: dict[tuple, tuple[float, float]] = {}
    for s in sorted(samples, key=lambda s: (s.frame.arc_param, s.frame.base, s.side, s.n_hat, s.offset)):
        key = (s.frame.base, s.side, s.n_hat)
        start = prev.get(key, s.frame.base)
        prev[key] = s.point
        if s.excluded is not None:
            continue
        cls = tick_class(s.ip, zero_tol)
        out.append(
            f'<line class="tick {cls}" x1="{_fmt(start[0])}" y1="{_fmt(-start[1])}" '
            f'x2="{_fmt(s.point[0])}" y2="{_fmt(-s.point[1])}" stroke="{TICK_COLORS[cls]}" stroke-width="{_fmt(sw)}"/>'
        )
    return out


def _traces(traces: Iterable[OrbitTrace], sw: float) -> list[str]:
    out = []
    for tr in traces:
        if len(tr.points) < 2:
            continue
        pts = " ".join(_xy(x, y) for x, y in tr.points)
        out.append(f'<polyline class="trace" points="{pts}" fill="none" stroke="{TRACE_COLOR}" stroke-width="{_fmt(sw)}"/>')
    return out


def render_svg(
    layers: Sequence[tuple[ManifoldSpec, Sequence[TubeSample], Sequence[OrbitTrace]]],
    window: Rect,
    field: VectorField | None = None,
    zero_tol: float = 1e-9,
    size: int = 800,
) -> str:
    """SVG text for one or more manifolds drawn over the same window."""
    sw = 0.003 * max(window.width, window.height)
    aspect = window.height / window.width
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{round(size * aspect)}" '
        f'viewBox="{_fmt(window.xmin)} {_fmt(-window.ymax)} {_fmt(window.width)} {_fmt(window.height)}">',
        "<defs>",
        f'<marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="4" markerHeight="4" orient="auto">'
        f'<path d="M 0 0 L 10 5 L 0 10 z" fill="{FIELD_COLOR}"/></marker>',
        "</defs>",
        f'<rect x="{_fmt(window.xmin)}" y="{_fmt(-window.ymax)}" width="{_fmt(window.width)}" height="{_fmt(window.height)}" fill="white"/>',
    ]
    body = []
    if field is not None:
        body.append('<g id="field">')
        body += _field_arrows(field, window, sw)
        body.append("</g>")
    for i, (m, samples, traces) in enumerate(layers):
        body.append(f'<g id="manifold-{i}">')
        body += _traces(traces, sw)
        body += _ticks(samples, zero_tol, sw)
        body += _manifold_paths(m, sw)
        body.append("</g>")
    return "\n".join(head + body + ["</svg>", ""])


def emit_svg(
    field: VectorField,
    m: ManifoldSpec,
    samples: Sequence[TubeSample],
    traces: Sequence[OrbitTrace],
    path: str | Path,
    window: Rect | None = None,
    zero_tol: float = 1e-9,
) -> Path:
    if window is None:
        window = Rect(-3.0, 3.0, -3.0, 3.0)
    return write_svg(render_svg([(m, samples, traces)], window, field, zero_tol), path)


def write_svg(text: str, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ImattractError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
