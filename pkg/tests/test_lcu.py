from fractions import Fraction

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import Q1, Q2, integer_matrices
from hypctrl.lcu import canonical_form, is_canonical, rho_zero

Q1_ZERO = [[0, 1, 0], [0, 0, 1], [0, 0, 0], [1, 0, 0]]
Q2_ZERO = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0]]


def exact_product(*mats):
    out = [[Fraction(v) for v in row] for row in mats[0]]
    for B in mats[1:]:
        B = [[Fraction(v) for v in row] for row in B]
        out = [[sum(out[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))]
               for i in range(len(out))]
    return out


def test_q1_golden():
    cf = canonical_form(Q1, rational=True)
    assert cf.Q0 == Q1_ZERO
    assert cf.pairs == ((1, 2), (2, 3), (4, 1))
    assert (cf.rho, cf.rho0) == (3, 2)
    assert exact_product(cf.L, Q1, cf.U) == cf.Q0
    assert cf.U == [[1, 1, -3], [0, 1, -2], [0, 0, 1]]


def test_q1_first_column_substitution():
    U1 = [[1, 0, 0], [0, 1, -2], [0, 0, 1]]
    assert exact_product(Q1, U1) == [[0, 1, 0], [0, 2, 1], [0, 1, 0], [4, -4, 12]]
    U2 = [[1, 1, -3], [0, 1, 0], [0, 0, 1]]
    assert exact_product(Q1, U1, U2) == [[0, 1, 0], [0, 2, 1], [0, 1, 0], [4, 0, 0]]
    assert exact_product(U1, U2) == canonical_form(Q1, rational=True).U


def test_q2_golden():
    cf = canonical_form(Q2, rational=True)
    assert cf.Q0 == Q2_ZERO
    assert cf.pairs == ((1, 1), (2, 2), (4, 3))
    assert exact_product(cf.L, Q2, cf.U) == cf.Q0


def test_zero_and_identity():
    cf = canonical_form([[0, 0], [0, 0], [0, 0]], rational=True)
    assert cf.rho == 0 and cf.rho0 == 0 and cf.pairs == ()
    assert cf.L == [[1, 0, 0], [0, 1, 0], [0, 0, 1]] and cf.U == [[1, 0], [0, 1]]
    eye = np.eye(3).tolist()
    cf = canonical_form(eye, rational=True)
    assert cf.Q0 == eye and cf.L == eye and cf.U == eye


def test_float_mode_matches_rational():
    cf = canonical_form(Q1)
    assert np.array_equal(cf.Q0, np.array(Q1_ZERO, dtype=float))
    np.testing.assert_allclose(cf.L @ np.array(Q1, float) @ cf.U, cf.Q0, atol=1e-12 * 5)


def test_rational_mode_reads_decimals():
    cf = canonical_form([[0.1, 0.3]], rational=True)
    assert cf.U[0][1] == Fraction(-3)
    assert cf.L[0][0] == Fraction(10)


def test_is_canonical_examples():
    assert is_canonical(Q1_ZERO)
    assert is_canonical(Q2_ZERO)
    assert is_canonical([[0, 0], [0, 0]])
    assert not is_canonical([[2, 0], [0, 0]])
    assert not is_canonical([[0, 1], [0, 1]])
    assert not is_canonical([[1, 1], [0, 0]])


def test_rho_zero_examples():
    assert rho_zero(Q1) == 2
    assert rho_zero([[1, 0, 0], [0, 1, 0]]) == 2
    assert rho_zero([[0, 0], [1, 2], [3, 4]]) == 0


# ---------------------------------------------------------------------------
# properties


def shapes():
    return st.tuples(st.integers(1, 5), st.integers(1, 5))


@st.composite
def q_and_shape(draw):
    p, m = draw(shapes())
    return draw(integer_matrices(p, m))


@st.composite
def unit_upper(draw, m):
    U = np.eye(m, dtype=int)
    for i in range(m):
        for j in range(i + 1, m):
            U[i, j] = draw(st.integers(-3, 3))
    return U.tolist()


@st.composite
def invertible_lower(draw, p):
    L = np.zeros((p, p), dtype=int)
    for i in range(p):
        L[i, i] = draw(st.sampled_from([-3, -2, -1, 1, 2, 3]))
        for j in range(i):
            L[i, j] = draw(st.integers(-3, 3))
    return L.tolist()


@given(q_and_shape(), st.data())
@settings(max_examples=150, deadline=None)
def test_canonical_form_invariant_under_lcu_action(Q, data):
    p, m = len(Q), len(Q[0])
    L = data.draw(invertible_lower(p))
    U = data.draw(unit_upper(m))
    moved = exact_product(L, Q, U)
    assert canonical_form(moved, rational=True).Q0 == canonical_form(Q, rational=True).Q0


@given(q_and_shape())
@settings(max_examples=150, deadline=None)
def test_structure_and_reconstruction(Q):
    cf = canonical_form(Q, rational=True)
    p, m = len(Q), len(Q[0])
    assert exact_product(cf.L, Q, cf.U) == cf.Q0
    assert is_canonical(cf.Q0)
    assert cf.rho == np.linalg.matrix_rank(np.array(Q, float)) == len(cf.pairs)
    assert cf.rho0 <= cf.rho <= min(p, m)
    rows = [r for r, _ in cf.pairs]
    assert rows == sorted(rows) and len({c for _, c in cf.pairs}) == len(cf.pairs)
    # rho0 equals the largest leading block of full row rank
    A = np.array(Q, float)
    lead = 0
    for i in range(1, p + 1):
        if np.linalg.matrix_rank(A[:i]) == i:
            lead = i
        else:
            break
    assert cf.rho0 == lead
    # float mode rebuilds Q from the factors
    fl = canonical_form(Q)
    scale = max(1.0, float(np.abs(A).max()))
    np.testing.assert_allclose(fl.Linv @ fl.Q0 @ fl.Uinv, A, atol=1e-10 * scale)
    assert np.array_equal(fl.Q0, np.array(cf.Q0, dtype=float))


@given(st.integers(1, 4), st.integers(2, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_leading_blocks_give_diagonal_pivots(p, m, seed):
    rng = np.random.default_rng(seed)
    Q = rng.integers(-4, 5, size=(p, m))
    k = min(p, m - 1)
    assume(all(round(np.linalg.det(Q[:i, :i])) != 0 for i in range(1, k + 1)))
    pairs = canonical_form(Q.tolist(), rational=True).pairs
    assert all(pairs[i] == (i + 1, i + 1) for i in range(k))
