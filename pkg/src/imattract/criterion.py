"""Inner-product attractiveness test over a transverse tube around a manifold.

For every base point on the manifold and every point ``x'`` on its normal
(offsets in ``[eps_min, eps_max]``), the field value ``f(x')`` is dotted with
the unit vector pointing from the base toward ``x'``. A side whose products
are all negative is attractive, all positive repulsive, all (numerically)
zero neutral, and anything else indefinite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllSamplesExcluded, EmptySide
from .geometry import Frame, ManifoldSpec, VectorField, sample_frames_detailed

EXCLUSION_LIMIT = 0.10


class Verdict(str, enum.Enum):
    ATTRACTIVE = "attractive"
    REPULSIVE = "repulsive"
    NEUTRAL = "neutral"
    INDEFINITE = "indefinite"
    MIXED = "mixed"
    INCONCLUSIVE = "inconclusive"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class TubeConfig:
    eps_min: float = 1e-3
    eps_max: float = 0.25
    n_offsets: int = 8
    n_base: int = 64
    zero_tol: float = 1e-9

    def __post_init__(self):
        if not (0 < self.eps_min < self.eps_max) or not math.isfinite(self.eps_max):
            raise ValueError(f"need 0 < eps_min < eps_max, got {self.eps_min}, {self.eps_max}")
        if self.n_offsets < 1 or self.n_base < 1:
            raise ValueError("n_offsets and n_base must be at least 1")
        if not self.zero_tol > 0:
            raise ValueError("zero_tol must be positive")

    def offsets(self) -> np.ndarray:
        if self.n_offsets == 1:
            return np.array([self.eps_max])
        return np.linspace(self.eps_min, self.eps_max, self.n_offsets)


@dataclass(frozen=True)
class TubeSample:
    frame: Frame
    side: str
    offset: float
    point: tuple[float, float]
    field: tuple[float, float]
    n_hat: tuple[float, float]
    ip: float
    excluded: str | None = None  # reason, when the field could not be evaluated


@dataclass
class SideClassification:
    verdict: Verdict
    min_ip: float
    max_ip: float
    witness_attract: TubeSample | None = None
    witness_repel: TubeSample | None = None
    n_samples: int = 0
    n_excluded: int = 0


@dataclass
class ManifoldClassification:
    per_side: dict[str, SideClassification]
    overall: Verdict
    samples: list[TubeSample] = field(default_factory=list)
    skipped_frames: list[tuple[float, float]] = field(default_factory=list)


def _side_layout(frame: Frame) -> list[tuple[str, float]]:
    sides = [(frame.plus_side, 1.0)]
    if frame.minus_side is not None:
        sides.append((frame.minus_side, -1.0))
    return sides


def probe_many(field: VectorField, frames: list[Frame], cfg: TubeConfig) -> list[TubeSample]:
    """Vectorized tube sampling over the given frames."""
    offsets = cfg.offsets()
    rows = []
    for frame in frames:
        for side, sign in _side_layout(frame):
            for r in offsets:
                rows.append((frame, side, sign, float(r)))
    if not rows:
        return []
    base = np.array([row[0].base for row in rows])
    normal = np.array([row[0].normal for row in rows])
    sign = np.array([row[2] for row in rows])
    r = np.array([row[3] for row in rows])
    n_hat = normal * sign[:, None]
    pts = base + r[:, None] * n_hat
    fx, fy, ok, reason = field.evaluate_many(pts[:, 0], pts[:, 1])
    ip = fx * n_hat[:, 0] + fy * n_hat[:, 1]
    samples = []
    for i, (frame, side, _, off) in enumerate(rows):
        good = bool(ok[i])
        samples.append(
            TubeSample(
                frame=frame,
                side=side,
                offset=off,
                point=(float(pts[i, 0]), float(pts[i, 1])),
                field=(float(fx[i]), float(fy[i])) if good else (math.nan, math.nan),
                n_hat=(float(n_hat[i, 0]), float(n_hat[i, 1])),
                ip=float(ip[i]) if good else math.nan,
                excluded=None if good else (_point_reason(field, pts[i]) or reason),
            )
        )
    return samples


def _point_reason(field: VectorField, p: np.ndarray) -> str | None:
    _, _, _, reason = field.evaluate_many(p[0], p[1])
    return reason


def probe(field: VectorField, frame: Frame, r: float, sign: float = 1.0) -> TubeSample:
    """Single tube sample at offset ``r`` on the ``sign`` side of ``frame``."""
    side = frame.plus_side if sign > 0 else (frame.minus_side or frame.plus_side)
    nx, ny = sign * frame.normal[0], sign * frame.normal[1]
    px, py = frame.base[0] + r * nx, frame.base[1] + r * ny
    fx, fy = field.at(px, py)
    return TubeSample(frame, side, r, (px, py), (fx, fy), (nx, ny), fx * nx + fy * ny)


def sample_tube(field: VectorField, m: ManifoldSpec, cfg: TubeConfig) -> list[TubeSample]:
    """Samples ordered by arc parameter, then side, then offset."""
    return _sample(field, m, cfg)[0]


def _sample(field: VectorField, m: ManifoldSpec, cfg: TubeConfig):
    sampling = sample_frames_detailed(m, cfg.n_base)
    samples = probe_many(field, sampling.frames, cfg)
    if samples and all(s.excluded is not None for s in samples):
        raise AllSamplesExcluded(f"field could not be evaluated anywhere in the tube: {samples[0].excluded}")
    if not samples:
        raise AllSamplesExcluded("no frames could be sampled on the manifold")
    return samples, sampling.skipped


def classify_side(samples: list[TubeSample], zero_tol: float = 1e-9) -> SideClassification:
    if not samples:
        raise EmptySide("no samples on this side")
    valid = [s for s in samples if s.excluded is None]
    n_excl = len(samples) - len(valid)
    if not valid:
        return SideClassification(Verdict.INDEFINITE, math.nan, math.nan, None, None, len(samples), n_excl)
    lo = min(valid, key=lambda s: s.ip)
    hi = max(valid, key=lambda s: s.ip)
    min_ip, max_ip = lo.ip, hi.ip
    if max_ip < -zero_tol:
        verdict = Verdict.ATTRACTIVE
    elif min_ip > zero_tol:
        verdict = Verdict.REPULSIVE
    elif abs(min_ip) <= zero_tol and abs(max_ip) <= zero_tol:
        verdict = Verdict.NEUTRAL
    else:
        verdict = Verdict.INDEFINITE
    if n_excl > EXCLUSION_LIMIT * len(samples):
        verdict = Verdict.INDEFINITE
    return SideClassification(
        verdict,
        min_ip,
        max_ip,
        witness_attract=lo if min_ip < -zero_tol else None,
        witness_repel=hi if max_ip > zero_tol else None,
        n_samples=len(samples),
        n_excluded=n_excl,
    )


def combine_sides(verdicts: list[Verdict]) -> Verdict:
    if any(v is Verdict.INDEFINITE for v in verdicts):
        return Verdict.INDEFINITE
    if len(set(verdicts)) == 1:
        return verdicts[0]
    return Verdict.MIXED


def classify_samples(samples: list[TubeSample], zero_tol: float) -> dict[str, SideClassification]:
    by_side: dict[str, list[TubeSample]] = {}
    for s in samples:
        by_side.setdefault(s.side, []).append(s)
    return {side: classify_side(group, zero_tol) for side, group in sorted(by_side.items())}


def classify_manifold(field: VectorField, m: ManifoldSpec, cfg: TubeConfig | None = None) -> ManifoldClassification:
    cfg = cfg or TubeConfig()
    samples, skipped = _sample(field, m, cfg)
    per_side = classify_samples(samples, cfg.zero_tol)
    overall = combine_sides([c.verdict for c in per_side.values()])
    return ManifoldClassification(per_side, overall, samples, skipped)
