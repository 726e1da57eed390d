import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypctrl.counterexample import (
    ALIGNED_CFL,
    CounterexampleSpec,
    closed_form_solution,
    condition_sweep,
    critical_products,
    fredholm_obstruction,
    fredholm_solve,
    forcing,
    localize_critical,
    manufactured_data,
    null_control_t2,
    shooting_residual,
    verify_t2,
    witness_data,
)
from hypctrl.errors import NearSingular
from hypctrl.simulator import OpenLoop, simulate, smooth_bump

CRIT0 = -math.pi ** 2 / 4


def zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def one(x):
    return np.ones_like(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# closed form


def test_closed_form_pure_transport():
    spec = CounterexampleSpec(0.0, 0.0)
    y0 = [lambda x: np.sin(3 * x), zero, zero]
    u = [lambda s: 10 + s, zero]
    y1, _, _ = closed_form_solution(spec, y0, u, 0.3, 0.5)
    assert y1 == pytest.approx(math.sin(2.4), abs=1e-14)
    y1, _, _ = closed_form_solution(spec, y0, u, 0.9, 0.5)
    assert y1 == pytest.approx(10.4, abs=1e-14)


def test_closed_form_hand_value():
    # t - 2(1 - x) < 0, so y2 = y0_2 + a int_0^t y1(s, 0) ds = 0.5
    spec = CounterexampleSpec(1.0, 1.0)
    _, y2, _ = closed_form_solution(spec, [one, zero, zero], [zero, zero], 0.5, 0.25)
    assert y2 == pytest.approx(0.5, abs=1e-12)


def test_closed_form_matches_simulator():
    spec = CounterexampleSpec(0.7, -1.3)
    y0 = [lambda x: smooth_bump(x, 0.1, 0.9), lambda x: smooth_bump(x, 0.2, 0.7), lambda x: smooth_bump(x, 0.3, 0.95)]
    u = [lambda s: np.sin(2 * s) * smooth_bump(s, 0.0, 2.5), lambda s: 0.5 * smooth_bump(s, 0.2, 1.8)]
    T = 2.5
    control = OpenLoop.from_function(lambda s: np.vstack([u[0](s), u[1](s)]), T, 4001)
    Y0 = lambda x: np.stack([g(x) for g in y0])
    rng = np.random.default_rng(0)
    pts = rng.uniform([0.0, 0.0], [T, 1.0], size=(100, 2))
    exact = np.array(closed_form_solution(spec, y0, u, pts[:, 0], pts[:, 1]))
    errors = []
    for N in (100, 200):
        tr = simulate(spec.system(), Y0, control, T, N, cfl=ALIGNED_CFL)
        approx = np.array([[np.interp(x, tr.x, tr.state_at(t)[i]) for t, x in pts] for i in range(3)])
        errors.append(np.abs(approx - exact).max())
    assert errors[0] <= 5 / 100 and errors[1] <= 5 / 200
    assert errors[1] < errors[0]


# ---------------------------------------------------------------------------
# critical set


def test_critical_products():
    roots = critical_products(3)
    assert roots[0].analytic == pytest.approx(-2.4674011, abs=1e-7)
    assert roots[1].analytic == pytest.approx(-22.2066099, abs=1e-7)
    for r in roots:
        assert r.analytic == pytest.approx(-(math.pi / 2 + r.k * math.pi) ** 2, abs=1e-12)
        assert abs(r.shooting - r.analytic) <= 1e-6


@given(st.floats(1e-3, 50.0))
@settings(max_examples=30, deadline=None)
def test_no_roots_for_positive_products(ab):
    assert shooting_residual(ab) == pytest.approx(math.cosh(math.sqrt(ab)), rel=1e-9)
    assert shooting_residual(ab) > 0


# ---------------------------------------------------------------------------
# integral equation


def test_fredholm_zero_product():
    f = lambda t: np.cos(5 * t) + t ** 2
    sol = fredholm_solve(0.0, f, 64)
    np.testing.assert_array_equal(sol.u, f(sol.t))


@pytest.mark.parametrize("rule", ["trapezoid", "midpoint"])
def test_fredholm_second_order(rule):
    errors = []
    for n in (32, 64, 128, 256):
        sol = fredholm_solve(-1.0, one, n, rule)
        errors.append(np.abs(sol.u - np.cos(sol.t) / math.cos(1.0)).max())
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(rates > 1.8), rates


def test_fredholm_rules_agree():
    f = lambda t: np.exp(t) * (1 - t)
    a = fredholm_solve(-3.5, f, 512, "trapezoid")
    b = fredholm_solve(-3.5, f, 512, "midpoint")
    assert np.abs(a(b.t) - b.u).max() < 1e-4


def test_fredholm_small_grid_rejected():
    with pytest.raises(ValueError):
        fredholm_solve(-1.0, one, 8)


def test_condition_spike_is_localized():
    rows = condition_sweep(CRIT0 - 0.5, CRIT0 + 0.5, 21, n=128)
    conds = np.array([c for _, c, _ in rows])
    abs_ = np.array([a for a, _, _ in rows])
    assert abs(abs_[conds.argmax()] - CRIT0) <= 0.05
    assert conds.max() > 100 * np.median(conds)
    assert abs(localize_critical(CRIT0 - 0.5, CRIT0 + 0.5, n=512) - CRIT0) <= 1e-3


def test_obstruction_pairing():
    assert fredholm_obstruction(-1.0, one) is None
    assert fredholm_obstruction(CRIT0, lambda t: smooth_bump(t, 0.2, 0.8)) > 0.1
    # the next eigenmode is orthogonal to the first one
    w1 = 1.5 * math.pi
    orth = lambda t: np.cos(w1 * np.asarray(t))
    assert fredholm_obstruction(CRIT0, orth) < 1e-8


# ---------------------------------------------------------------------------
# controls at T = 2


def test_trivial_couplings_give_zero_controls():
    spec = CounterexampleSpec(0.0, 0.0)
    y0 = [lambda x: smooth_bump(x, 0.1, 0.9), lambda x: smooth_bump(x, 0.2, 0.8), lambda x: smooth_bump(x, 0.3, 0.7)]
    ctrl = null_control_t2(spec, y0, 64)
    assert np.all(ctrl.u.values == 0)
    # only the C^3 tail of the slowest bump remains
    assert verify_t2(spec, y0, ctrl, 50).residual <= 1e-14


def test_manufactured_control_is_recovered():
    spec = CounterexampleSpec(1.0, -1.0)
    y0, u_star = manufactured_data(spec)
    ctrl = null_control_t2(spec, y0, 512)
    assert np.abs(ctrl.u1.u - u_star(ctrl.u1.t)).max() < 1e-4
    f = forcing(spec, y0)
    assert abs(float(f(np.array([1.0]))[0])) < 1e-12


def test_negative_product_controls_converge():
    spec = CounterexampleSpec(1.0, -1.0)
    y0, _ = manufactured_data(spec)
    ctrl = null_control_t2(spec, y0, 512)
    rep = verify_t2(spec, y0, ctrl, 100, halvings=2)
    for r, N in zip(rep.residuals, rep.resolutions):
        assert r <= 5.0 / N
    assert rep.slope > 0.8


def test_witness_is_near_singular():
    spec = CounterexampleSpec(1.0, CRIT0)
    with pytest.raises(NearSingular):
        null_control_t2(spec, witness_data(spec), 512)


@given(st.floats(-8.0, 2.0).filter(lambda v: abs(v - CRIT0) > 0.1 and abs(v) > 0.1))
@settings(max_examples=4, deadline=None)
def test_controls_away_from_criticality(ab):
    spec = CounterexampleSpec(1.0, ab)
    y0, _ = manufactured_data(spec)
    ctrl = null_control_t2(spec, y0, 256)
    rep = verify_t2(spec, y0, ctrl, 50, halvings=1)
    for r, N in zip(rep.residuals, rep.resolutions):
        assert r <= 5.0 / N
