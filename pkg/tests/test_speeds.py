import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from conftest import LAMBDA6, LAMBDA7, profiles
from hypctrl.errors import DomainError, OrderViolation, RangeError, SignViolation
from hypctrl.speeds import (
    characteristic,
    constant_profile,
    entry_exit_times,
    phi,
    phi_inverse,
    transport_time,
    transport_times,
    validate_profile,
    zeta,
)

# lambda_1 = -(1 + x) as breakpoints
AFFINE = [[0.0, -1.0], [1.0, -2.0]]


def quad_phi(speed, x):
    return quad(lambda s: 1.0 / abs(speed(s)), 0.0, x, epsabs=1e-14, epsrel=1e-13)[0]


# ---------------------------------------------------------------------------
# validation


def test_constant_profile_accepted():
    prof = validate_profile(list(LAMBDA7), 3)
    assert (prof.n, prof.m, prof.p) == (7, 3, 4)
    assert prof.eps == 1.0


def test_order_violation():
    with pytest.raises(OrderViolation):
        validate_profile([-1.0, -2.0, 1.0], 2)


def test_sign_violation():
    with pytest.raises(SignViolation):
        validate_profile([[[0, -0.5], [1, 0.5]], 1.0], 1)


def test_domain_errors():
    with pytest.raises(DomainError):
        validate_profile([[[0.1, -1], [1, -1]], 1.0], 1)
    with pytest.raises(DomainError):
        validate_profile([[[0, -1], [0.5, -1], [0.5, -2], [1, -2]], 1.0], 1)
    with pytest.raises(DomainError):
        validate_profile([-1.0, -0.5], 2)


def test_eps_floor():
    with pytest.raises(SignViolation):
        validate_profile([[[0, -1], [1, -1e-8]], 1.0], 1)


# ---------------------------------------------------------------------------
# transport times and travel-time coordinates


def test_transport_time_constants():
    prof = constant_profile(LAMBDA7, 3)
    assert transport_time(prof, 2) == pytest.approx(0.5, abs=1e-15)
    assert transport_time(prof, 4) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(transport_times(prof), [0.25, 0.5, 1, 1, 0.5, 1 / 3, 0.25], atol=1e-15)


def test_transport_time_affine_against_quadrature():
    prof = validate_profile([AFFINE, 1.0], 1)
    oracle = quad_phi(lambda s: -(1 + s), 1.0)
    assert oracle == pytest.approx(math.log(2), abs=1e-13)
    assert transport_time(prof, 1) == pytest.approx(oracle, abs=1e-13)


def test_phi_examples():
    prof = validate_profile([-4.0, AFFINE, 1.0], 2)
    # scalar components only where the order allows: -4 < -(1+x) on [0, 1]
    assert phi(prof, 1, 0.4) == pytest.approx(0.1, abs=1e-15)
    assert phi_inverse(prof, 1, 0.25) == pytest.approx(1.0, abs=1e-14)
    assert phi(prof, 2, 0.5) == pytest.approx(math.log(1.5), abs=1e-14)
    assert phi(prof, 2, 0.5) == pytest.approx(quad_phi(lambda s: -(1 + s), 0.5), abs=1e-13)
    for i in (1, 2, 3):
        assert phi(prof, i, 0.0) == 0.0
        assert phi(prof, i, 1.0) == pytest.approx(transport_time(prof, i), abs=1e-15)


def test_phi_inverse_range():
    prof = constant_profile(LAMBDA7, 3)
    with pytest.raises(RangeError):
        phi_inverse(prof, 1, 0.3)
    with pytest.raises(RangeError):
        phi_inverse(prof, 1, -0.1)


def test_multi_piece_phi_against_quadrature():
    raw = [[[0, -3], [0.3, -1], [0.7, -2], [1, -1.5]], [[0, 0.5], [0.5, 0.5], [1, 2]]]
    prof = validate_profile(raw, 1)
    for i in (1, 2):
        for x in (0.1, 0.3, 0.55, 0.9, 1.0):
            oracle = quad_phi(lambda s: prof.speed(i, s), x)
            assert phi(prof, i, x) == pytest.approx(oracle, abs=1e-12)


# ---------------------------------------------------------------------------
# zeta


def test_zeta_six_by_six():
    prof = constant_profile(LAMBDA6, 3)
    assert zeta(prof, 1, 2, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert zeta(prof, 1, 3, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert zeta(prof, 2, 3, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_zeta_identity():
    prof = validate_profile([AFFINE, -0.5, 1.0, 2.0], 2)
    x = np.linspace(0, 1, 11)
    for i in range(1, 5):
        np.testing.assert_allclose(zeta(prof, i, i, x), x, atol=1e-14)


def test_zeta_affine_against_root_finding():
    # phi_1(1) = ln 2, phi_2(x) = 2x, hence zeta_12(1) = ln(2) / 2
    prof = validate_profile([AFFINE, -0.5, 1.0], 2)
    target = quad_phi(lambda s: -(1 + s), 1.0)
    oracle = brentq(lambda z: quad_phi(lambda s: 0.5, z) - target, 0.0, 1.0, xtol=1e-15)
    value = zeta(prof, 1, 2, 1.0)
    assert value == pytest.approx(math.log(2) / 2, abs=1e-14)
    assert value == pytest.approx(oracle, abs=1e-12)


def test_zeta_rejects_invalid_pairs():
    prof = constant_profile(LAMBDA7, 3)
    with pytest.raises(IndexError):
        zeta(prof, 3, 1, 1.0)
    with pytest.raises(IndexError):
        zeta(prof, 4, 5, 1.0)
    with pytest.raises(IndexError):
        zeta(prof, 1, 4, 0.5)


# ---------------------------------------------------------------------------
# characteristics


def test_entry_exit_examples():
    prof = constant_profile([-2.0, 1.0], 1)
    assert entry_exit_times(prof, 1, 1.0, 0.5) == pytest.approx((0.75, 1.25), abs=1e-15)
    s_in, _ = entry_exit_times(prof, 1, 0.7, 1.0)
    assert s_in == pytest.approx(0.7, abs=1e-15)
    _, s_out = entry_exit_times(prof, 2, 0.0, 0.0)
    assert s_out == pytest.approx(transport_time(prof, 2), abs=1e-15)


def test_characteristic_examples():
    prof = validate_profile([AFFINE, 1.5], 1)
    assert characteristic(prof, 1, 0.3, 0.3, 0.6) == pytest.approx(0.6, abs=1e-15)
    expected = 2 * math.exp(-0.3) - 1
    ode = solve_ivp(lambda s, y: -(1 + y), (0, 0.3), [1.0], rtol=1e-12, atol=1e-14).y[0, -1]
    assert expected == pytest.approx(ode, abs=1e-10)
    assert characteristic(prof, 1, 0.3, 0.0, 1.0) == pytest.approx(expected, abs=1e-13)
    assert characteristic(prof, 2, 0.2, 0.0, 0.1) == pytest.approx(0.4, abs=1e-14)
    with pytest.raises(RangeError):
        characteristic(prof, 2, 1.0, 0.0, 0.1)


# ---------------------------------------------------------------------------
# properties


@given(profiles())
@settings(max_examples=60, deadline=None)
def test_order_of_transport_times(prof):
    T = transport_times(prof)
    m = prof.m
    assert np.all(np.diff(T[:m]) >= -1e-14)
    assert np.all(np.diff(T[m:]) <= 1e-14)


@given(profiles(), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_phi_round_trip(prof, seed):
    x = np.random.default_rng(seed).uniform(0, 1, 1000)
    for i in range(1, prof.n + 1):
        np.testing.assert_allclose(phi_inverse(prof, i, phi(prof, i, x)), x, rtol=0, atol=1e-12)
        ph = phi(prof, i, np.sort(x))
        assert np.all(np.diff(ph) >= 0)


@given(profiles(), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_flow_group_property(prof, seed):
    rng = np.random.default_rng(seed)
    for i in range(1, prof.n + 1):
        t, x = rng.uniform(0, 2), rng.uniform(0, 1)
        s_in, s_out = entry_exit_times(prof, i, t, x)
        s, sigma = rng.uniform(s_in, s_out, 2)
        xs = characteristic(prof, i, s, t, x)
        assert characteristic(prof, i, sigma, s, xs) == pytest.approx(characteristic(prof, i, sigma, t, x), abs=1e-10)


@given(profiles(), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_entry_inverse_relation(prof, seed):
    # a characteristic leaving x = b0 after s entered through x = b1 before t, and conversely
    rng = np.random.default_rng(seed)
    for i in range(1, prof.n + 1):
        out_edge, in_edge = (0.0, 1.0) if prof.is_negative(i) else (1.0, 0.0)
        for _ in range(20):
            s, t = rng.uniform(0, 3, 2)
            lhs = s < entry_exit_times(prof, i, t, out_edge)[1]
            rhs = entry_exit_times(prof, i, s, in_edge)[0] < t
            if abs(s - entry_exit_times(prof, i, t, out_edge)[1]) > 1e-12:
                assert lhs == rhs


@given(profiles(), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_zeta_consistency(prof, seed):
    x = np.random.default_rng(seed).uniform(0, 1, 50)
    m, n = prof.m, prof.n
    for i in range(1, n + 1):
        family = range(i, m + 1) if i <= m else range(m + 1, i + 1)
        for j in family:
            z = zeta(prof, i, j, x)
            assert np.all((z >= 0) & (z <= 1))
            np.testing.assert_allclose(phi(prof, j, z), phi(prof, i, x), rtol=0, atol=1e-12)
