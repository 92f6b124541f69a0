import csv
import io
import math

import numpy as np
import pytest

from imattract.criterion import TubeConfig, Verdict
from imattract.expr import parse
from imattract.geometry import Equilibrium, Graph, Implicit, Parametric, Rect, VectorField
from imattract.oracle import (
    MAX_SEEDS,
    _worker_count,
    consistent,
    integrate_orbit,
    oracle_seeds,
    oracle_verdict,
    rk4_step,
    trace_csv,
)

ORIGIN = Equilibrium(0.0, 0.0)
LINEAR = VectorField.from_text("x", "-y")
CENTER = VectorField.from_text("y", "-x")
HOPF = VectorField.from_text("-y - x*(x^2 + y^2 - 1)", "x - y*(x^2 + y^2 - 1)")
T = ("t",)
CIRCLE = Parametric(parse("cos(t)", T), parse("sin(t)", T), (0.0, 2 * math.pi), closed=True)


def test_rk4_linear_step_matches_exponentials():
    h = 0.1
    x, y = rk4_step(LINEAR, (1.0, 1.0), h)
    # on a linear system one RK4 step is the degree-4 Taylor polynomial of exp
    taylor = lambda z: 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
    assert x == pytest.approx(taylor(h), abs=1e-15)
    assert y == pytest.approx(taylor(-h), abs=1e-15)
    # what remains is the local truncation error, about h^5/120
    assert abs(x - math.exp(h)) <= 1.1 * h**5 / 120
    assert abs(y - math.exp(-h)) <= 1.1 * h**5 / 120
    assert f"{x:.7f}" == "1.1051708" and f"{y:.7f}" == "0.9048375"


def test_rk4_zero_field_is_identity():
    assert rk4_step(VectorField.from_text("0", "0"), (0.3, -2.0), 0.5) == (0.3, -2.0)


def test_rk4_rotation():
    x, y = rk4_step(CENTER, (1.0, 0.0), 0.01)
    assert math.hypot(x - math.cos(0.01), y + math.sin(0.01)) <= 1e-10


def test_orbit_decays_onto_x_axis():
    # x grows like e^t, so the window must reach past e^5
    trace = integrate_orbit(LINEAR, (1.0, 0.5), 1e-3, 5.0, Graph(parse("0")), Rect(-200, 200, -2, 2))
    assert not trace.exited
    assert trace.times[-1] == pytest.approx(5.0)
    assert trace.distances[-1] == pytest.approx(0.5 * math.exp(-5), rel=0.05)


def test_hopf_orbit_reaches_circle():
    trace = integrate_orbit(HOPF, (0.5, 0.0), 1e-3, 10.0, CIRCLE)
    assert trace.distances[-1] < 1e-3
    assert not trace.exited


def test_orbit_on_manifold_stays():
    field = VectorField.from_text("x*y^3", "-y - x - x*y^3")
    trace = integrate_orbit(field, (0.5, -0.5), 1e-3, 10.0, Graph(parse("-x")))
    assert np.max(trace.distances) <= 1e-6


def test_trace_shape_and_early_exit():
    trace = integrate_orbit(VectorField.from_text("x", "y"), (0.5, 0.5), 1e-2, 10.0, ORIGIN, Rect(-2, 2, -2, 2))
    assert trace.exited
    assert len(trace.times) == len(trace.points) == len(trace.distances)
    assert np.all(np.diff(trace.times) > 0)
    assert np.all(np.abs(trace.points) <= 2)
    assert trace.times[-1] == pytest.approx(math.log(4), abs=0.02)


def test_orbit_domain_failure_is_flagged():
    # x drifts left and ln(x) is undefined once x crosses 0
    trace = integrate_orbit(VectorField.from_text("ln(x)", "0"), (0.5, 0.0), 1e-3, 10.0, ORIGIN)
    assert "ln" in trace.failure
    assert trace.times[-1] < 10


def test_rk4_global_order():
    def err(h):
        p = (1.0, 1.0)
        for _ in range(round(1 / h)):
            p = rk4_step(LINEAR, p, h)
        return math.hypot(p[0] - math.e, p[1] - 1 / math.e)

    e = [err(h) for h in (0.1, 0.05, 0.025)]
    for a, b in zip(e, e[1:]):
        assert 14 <= a / b <= 18


def test_center_energy_drift():
    trace = integrate_orbit(CENTER, (0.25, 0.0), 1e-3, 10.0, ORIGIN)
    r2 = np.sum(trace.points**2, axis=1)
    assert np.max(np.abs(r2 - 0.0625)) <= 1e-6


@pytest.mark.parametrize(
    "fx, fy, expected",
    [
        ("-x + y", "-x - y", Verdict.ATTRACTIVE),
        ("x + y", "-x + y", Verdict.REPULSIVE),
        ("y", "-x", Verdict.INCONCLUSIVE),
    ],
)
def test_equilibrium_verdicts(fx, fy, expected):
    v = oracle_verdict(VectorField.from_text(fx, fy), ORIGIN)
    assert v.verdict is expected
    assert v.seeds_used == 64


def test_center_ratio_is_one():
    v = oracle_verdict(CENTER, ORIGIN)
    assert v.contraction_ratio == pytest.approx(1.0, abs=1e-6)
    assert v.escaped == 0


def test_seeds_cover_both_sides():
    seeds = oracle_seeds(CIRCLE, TubeConfig())
    r = np.hypot(seeds[:, 0], seeds[:, 1])
    assert len(seeds) <= MAX_SEEDS
    assert np.sum(np.isclose(r, 0.75)) == np.sum(np.isclose(r, 1.25)) == len(seeds) // 2


def test_failed_orbits_give_inconclusive():
    v = oracle_verdict(VectorField.from_text("ln(x)", "0"), ORIGIN)
    assert v.verdict is Verdict.INCONCLUSIVE
    assert v.failed > v.seeds_used / 2
    assert v.diagnostics


def test_thread_count_does_not_change_result(monkeypatch):
    field = VectorField.from_text("-x + y", "-x - y")
    a = oracle_verdict(field, ORIGIN, threads=1)
    b = oracle_verdict(field, ORIGIN, threads=3)
    assert a == b
    monkeypatch.setenv("ATTRACT_THREADS", "2")
    assert _worker_count(None, 64) == 2
    monkeypatch.setenv("ATTRACT_THREADS", "0")
    assert 1 <= _worker_count(None, 64) <= 2


def test_consistency_mapping():
    A, R, N, I, M, X = (
        Verdict.ATTRACTIVE,
        Verdict.REPULSIVE,
        Verdict.NEUTRAL,
        Verdict.INDEFINITE,
        Verdict.MIXED,
        Verdict.INCONCLUSIVE,
    )
    assert consistent(A, A) and not consistent(A, X) and not consistent(A, R)
    assert consistent(R, R) and not consistent(R, A)
    assert consistent(N, X) and not consistent(N, A)
    assert consistent(I, X) and consistent(I, R) and not consistent(I, A)
    assert consistent(M, X) and not consistent(M, A)


def test_csv_format_and_cap():
    trace = integrate_orbit(CENTER, (0.5, 0.0), 1e-3, 20.0, ORIGIN)
    text = trace_csv(trace)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t", "x", "y", "dist"]
    assert len(rows) - 1 == 10_000
    assert rows[1] == ["0", "0.5", "0", "0.5"]
    assert float(rows[-1][0]) == pytest.approx(20.0)
    for row in rows[1:50] + rows[-50:]:
        for v in row:
            assert v == f"{float(v):.6g}"


def test_implicit_line_oracle():
    field = VectorField.from_text("x*y^3", "-y - x - x*y^3")
    v = oracle_verdict(field, Implicit(parse("x + y")))
    assert v.verdict is Verdict.ATTRACTIVE
