import math

import numpy as np
import pytest

from imattract.errors import EmptyManifold
from imattract.expr import evaluate, parse
from imattract.geometry import (
    Equilibrium,
    Graph,
    Implicit,
    Parametric,
    Rect,
    distance_to_manifold,
    distances_to_manifold,
    is_closed,
    manifold_bbox,
    rotate_manifold,
    sample_frames,
    sample_frames_detailed,
)

T = ("t",)
CIRCLE = Parametric(parse("cos(t)", T), parse("sin(t)", T), (0.0, 2 * math.pi), closed=True)
CIRCLE_CW = Parametric(parse("cos(t)", T), parse("-sin(t)", T), (0.0, 2 * math.pi), closed=True)
UNIT_F = Implicit(parse("x^2 + y^2 - 1"))
ANTI = Graph(parse("-x"))


def _check_frames(frames):
    for f in frames:
        t, n = np.array(f.tangent), np.array(f.normal)
        assert abs(np.linalg.norm(t) - 1) <= 1e-12
        assert abs(np.linalg.norm(n) - 1) <= 1e-12
        assert abs(t @ n) <= 1e-12
        # normal is the tangent turned +90 degrees
        assert n == pytest.approx((-t[1], t[0]), abs=1e-15)
    params = [f.arc_param for f in frames]
    assert all(b > a for a, b in zip(params, params[1:]))


def test_equilibrium_frames():
    frames = sample_frames(Equilibrium(0, 0), 4)
    assert [f.base for f in frames] == [(0, 0)] * 4
    normals = np.array([f.normal for f in frames])
    assert normals == pytest.approx(np.array([(1, 0), (0, 1), (-1, 0), (0, -1)]), abs=1e-15)
    _check_frames(frames)


@pytest.mark.parametrize("curve", [CIRCLE, CIRCLE_CW])
def test_circle_frames(curve):
    frames = sample_frames(curve, 8)
    assert len(frames) == 8
    _check_frames(frames)
    f0 = frames[0]
    assert f0.base == pytest.approx((1, 0), abs=1e-15)
    assert abs(f0.tangent[0]) < 1e-15 and abs(abs(f0.tangent[1]) - 1) < 1e-15
    assert abs(abs(f0.normal[0]) - 1) < 1e-15
    for f in frames:
        assert math.hypot(*f.base) == pytest.approx(1, abs=1e-15)
        # "inward" must really point inside, whatever the orientation
        inward = np.array(f.normal) * (1 if f.plus_side == "inward" else -1)
        assert inward @ np.array(f.base) == pytest.approx(-1, abs=1e-12)
        assert {f.plus_side, f.minus_side} == {"inward", "outward"}


def test_closed_normals_vary_continuously():
    frames = sample_frames(CIRCLE, 64)
    n = np.array([f.normal for f in frames])
    angles = np.arccos(np.clip(np.sum(n * np.roll(n, -1, axis=0), axis=1), -1, 1))
    assert angles.max() < math.pi / 2


def test_implicit_frames_on_line():
    m = Implicit(parse("x + y"), Rect(-1, 1, -1, 1))
    frames = sample_frames(m, 5)
    assert len(frames) == 5
    _check_frames(frames)
    for f in frames:
        assert abs(evaluate(m.F, *f.base)) <= 1e-9


def test_implicit_circle_frames_and_sides():
    frames = sample_frames(UNIT_F, 64)
    assert len(frames) == 64
    _check_frames(frames)
    for f in frames:
        assert abs(evaluate(UNIT_F.F, *f.base)) <= 1e-9
        assert {f.plus_side, f.minus_side} == {"inward", "outward"}
    assert is_closed(UNIT_F)


def test_graph_frames_include_endpoints():
    m = Graph(parse("x^2"), domain=(-1, 1))
    frames = sample_frames(m, 11)
    assert frames[0].base == pytest.approx((-1, 1), abs=1e-15)
    assert frames[-1].base == pytest.approx((1, 1), abs=1e-15)
    for f in frames:
        assert f.base[1] == f.base[0] ** 2
    _check_frames(frames)


def test_graph_over_y():
    m = Graph(parse("0"), axis="y", domain=(0.1, 3))
    frames = sample_frames(m, 16)
    assert all(f.base[0] == 0 for f in frames)
    assert frames[0].base[1] == pytest.approx(0.1) and frames[-1].base[1] == pytest.approx(3)


def test_empty_implicit():
    with pytest.raises(EmptyManifold):
        sample_frames(Implicit(parse("x^2 + y^2 + 1")), 8)


def test_singular_point_skipped():
    # the branches of x^2 = y^2 cross where the gradient vanishes
    sampling = sample_frames_detailed(Implicit(parse("x^2 - y^2"), Rect(-1, 1, -1, 1)), 64)
    assert sampling.frames
    for f in sampling.frames:
        assert abs(f.base[0] ** 2 - f.base[1] ** 2) <= 1e-9


def test_invalid_specs():
    with pytest.raises(ValueError):
        Graph(parse("x"), domain=(1, 1))
    with pytest.raises(ValueError):
        Parametric(parse("t", T), parse("t", T), (0, 1), closed=True)
    with pytest.raises(ValueError):
        Rect(0, 0, 0, 1)


@pytest.mark.parametrize("m", [CIRCLE, UNIT_F])
def test_distance_circle(m):
    assert distance_to_manifold(m, (2, 0)) == pytest.approx(1.0, abs=1e-9)
    assert distance_to_manifold(m, (0.3, 0.4)) == pytest.approx(0.5, abs=1e-6)


def test_distance_brute_force_oracle():
    t = np.linspace(0, 2 * math.pi, 1_000_000, endpoint=False)
    ring = np.column_stack([np.cos(t), np.sin(t)])
    rng = np.random.default_rng(3)
    for p in rng.uniform(-2, 2, size=(20, 2)):
        brute = np.min(np.hypot(*(ring - p).T))
        assert distance_to_manifold(CIRCLE, p) == pytest.approx(brute, abs=1e-6)


@pytest.mark.parametrize("m", [ANTI, Implicit(parse("x + y"))])
def test_distance_line(m):
    assert distance_to_manifold(m, (1, 1)) == pytest.approx(math.sqrt(2), abs=1e-9)


def test_distance_equilibrium_and_truncated_graph():
    assert distance_to_manifold(Equilibrium(1, 2), (4, 6)) == 5.0
    seg = Graph(parse("0"), domain=(0, 1))
    assert distance_to_manifold(seg, (2, 0)) == pytest.approx(1.0, abs=1e-12)
    assert distance_to_manifold(seg, (0.5, -0.25)) == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("m", [CIRCLE, UNIT_F, ANTI, Graph(parse("sin(x)"))])
def test_frame_bases_are_on_manifold(m):
    bases = np.array([f.base for f in sample_frames(m, 64)])
    assert distances_to_manifold(m, bases).max() <= 1e-8


def test_rotation_preserves_distance():
    rng = np.random.default_rng(11)
    curve = Graph(parse("x^2/2 - 1"), domain=(-2, 2))
    for phi in rng.uniform(0, 2 * math.pi, 5):
        rot = rotate_manifold(curve, phi)
        c, s = math.cos(phi), math.sin(phi)
        for p in rng.uniform(-2, 2, size=(4, 2)):
            q = (c * p[0] - s * p[1], s * p[0] + c * p[1])
            assert distance_to_manifold(rot, q) == pytest.approx(distance_to_manifold(curve, p), abs=1e-9)


def test_bbox():
    assert manifold_bbox(CIRCLE) == pytest.approx((-1, 1, -1, 1), abs=1e-5)
    assert manifold_bbox(Equilibrium(0.5, -1)) == (0.5, 0.5, -1, -1)
