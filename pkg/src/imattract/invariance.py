"""Tangency check: is the candidate manifold invariant under the field?

The residual at a manifold point is the field's component along the unit
normal there (a perpendicular speed). On a graph ``y = g(x)`` this is
``(fy - g'(x) fx) / sqrt(1 + g'^2)``, on an implicit curve
``grad F . f / |grad F|``, and on an equilibrium simply ``|f(p)|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Equilibrium, ManifoldSpec, VectorField, sample_frames_detailed

DEFAULT_TOL = 1e-8


@dataclass
class InvarianceReport:
    max_residual: float
    mean_residual: float
    n_points: int
    passed: bool
    tol: float = DEFAULT_TOL
    n_skipped: int = 0
    failure: str | None = None


def invariance_residual(
    field: VectorField, m: ManifoldSpec, n_points: int = 256, tol: float = DEFAULT_TOL
) -> InvarianceReport:
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    if isinstance(m, Equilibrium):
        fx, fy, ok, reason = field.evaluate_many(np.array([m.px]), np.array([m.py]))
        if not ok[0]:
            return InvarianceReport(np.inf, np.inf, 1, False, tol, 0, reason)
        r = float(np.hypot(fx[0], fy[0]))
        return InvarianceReport(r, r, 1, r <= tol, tol)
    sampling = sample_frames_detailed(m, n_points)
    frames = sampling.frames
    if not frames:
        return InvarianceReport(np.inf, np.inf, 0, False, tol, len(sampling.skipped), "no regular manifold points")
    base = np.array([f.base for f in frames])
    normal = np.array([f.normal for f in frames])
    fx, fy, ok, reason = field.evaluate_many(base[:, 0], base[:, 1])
    if not ok.all():
        return InvarianceReport(np.inf, np.inf, len(frames), False, tol, len(sampling.skipped), reason)
    res = np.abs(fx * normal[:, 0] + fy * normal[:, 1])
    max_r = float(res.max())
    return InvarianceReport(max_r, float(res.mean()), len(frames), max_r <= tol, tol, len(sampling.skipped))
