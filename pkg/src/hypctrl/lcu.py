"""Canonical LCU decomposition of boundary coupling matrices.

Given a ``p x m`` matrix ``Q`` we find an invertible lower-triangular ``L``
and a unit upper-triangular ``U`` with ``L Q U = Q0``, where ``Q0`` has a
single 1 in each pivot row ``r_k`` at column ``c_k`` and zeros elsewhere.
The elimination never permutes rows or columns, so ``Q0`` is unique.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "CanonicalForm",
    "canonical_form",
    "is_canonical",
    "rho_zero",
    "rho_zero_from_pairs",
]


def _to_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    # str() gives the shortest decimal that round-trips, e.g. 0.1 -> 1/10
    return Fraction(str(float(x)))


def _identity(k, one, zero):
    return [[one if i == j else zero for j in range(k)] for i in range(k)]


@dataclass(frozen=True)
class CanonicalForm:
    """Result of :func:`canonical_form`.

    Attributes
    ----------
    Q0, L, U, Linv, Uinv
        Matrices as nested lists of ``Fraction`` (rational mode) or as
        float arrays.
    pairs
        Pivot positions ``(r_k, c_k)``, 1-based, with ``r_k`` increasing.
    rho, rho0
        Rank of ``Q`` and length of the leading run ``r_k = k``.
    """

    Q0: object
    L: object
    U: object
    Linv: object
    Uinv: object
    pairs: tuple
    rho: int
    rho0: int
    rational: bool

    @property
    def p(self):
        return len(self.Q0)

    @property
    def m(self):
        return len(self.Q0[0]) if len(self.Q0) else 0

    def as_float(self):
        """Copy with all matrices as float arrays."""
        conv = lambda A: np.array([[float(v) for v in row] for row in A], dtype=float)
        return CanonicalForm(conv(self.Q0), conv(self.L), conv(self.U), conv(self.Linv),
                             conv(self.Uinv), self.pairs, self.rho, self.rho0, False)

    def to_json(self):
        enc = (lambda v: str(v)) if self.rational else float
        mat = lambda A: [[enc(v) for v in row] for row in A]
        return {
            "Q0": [[int(v) for v in row] for row in np.asarray(self.as_float().Q0)],
            "L": mat(self.L),
            "U": mat(self.U),
            "pairs": [list(pr) for pr in self.pairs],
            "rho": self.rho,
            "rho0": self.rho0,
            "rational": self.rational,
        }


def canonical_form(Q, rational=False, pivot_tol=1e-9) -> CanonicalForm:
    """Canonical form of ``Q`` by row-ordered elimination without permutations.

    Parameters
    ----------
    Q : array_like, shape (p, m)
    rational : bool
        Use exact ``Fraction`` arithmetic. Floats are converted through their
        shortest decimal representation.
    pivot_tol : float
        Float mode only: entries with ``|a| <= pivot_tol * max|Q|`` count as zero.

    Returns
    -------
    CanonicalForm
    """
    if rational:
        A = [[_to_fraction(v) for v in row] for row in (Q.tolist() if isinstance(Q, np.ndarray) else Q)]
        one, zero = Fraction(1), Fraction(0)
        is_zero = lambda v: v == 0
    else:
        A = np.array(Q, dtype=float).tolist()
        one, zero = 1.0, 0.0
        scale = max((abs(v) for row in A for v in row), default=0.0)
        thresh = pivot_tol * scale
        is_zero = lambda v: abs(v) <= thresh
    p = len(A)
    m = len(A[0]) if p else 0
    if p < 1 or m < 1 or any(len(row) != m for row in A):
        raise ValueError("Q must be a non-empty rectangular matrix")

    L = _identity(p, one, zero)
    Linv = _identity(p, one, zero)
    U = _identity(m, one, zero)
    Uinv = _identity(m, one, zero)
    pivots = []  # (row, col), 0-based

    # column phase: the pivot of row r is its first nonzero entry outside the
    # earlier pivot columns; everything to its right is removed by C_j -= f C_c.
    # Column c is zero above row r, so earlier rows are untouched.
    for r in range(p):
        used = {pc for _, pc in pivots}
        c = next((j for j in range(m) if j not in used and not is_zero(A[r][j])), None)
        if c is None:
            continue
        piv = A[r][c]
        for j in range(c + 1, m):
            if is_zero(A[r][j]):
                continue
            f = A[r][j] / piv
            for i in range(p):
                A[i][j] -= f * A[i][c]
            A[r][j] = zero
            for i in range(m):
                U[i][j] -= f * U[i][c]
                Uinv[c][i] += f * Uinv[j][i]
        pivots.append((r, c))

    # row phase: clear each pivot column below its pivot, then normalize
    for r, c in pivots:
        piv = A[r][c]
        for i in range(r + 1, p):
            a = A[i][c]
            if is_zero(a):
                A[i][c] = zero
                continue
            f = a / piv
            for j in range(m):
                A[i][j] -= f * A[r][j]
            A[i][c] = zero
            for j in range(p):
                L[i][j] -= f * L[r][j]
                Linv[j][r] += f * Linv[j][i]
    for r, c in pivots:
        piv = A[r][c]
        for j in range(p):
            L[r][j] = L[r][j] / piv
            Linv[j][r] = Linv[j][r] * piv

    Q0 = [[zero] * m for _ in range(p)]
    for r, c in pivots:
        Q0[r][c] = one
    pairs = tuple((r + 1, c + 1) for r, c in pivots)
    rho0 = rho_zero_from_pairs(pairs)
    cf = CanonicalForm(Q0, L, U, Linv, Uinv, pairs, len(pairs), rho0, bool(rational))
    return cf if rational else cf.as_float()


def rho_zero_from_pairs(pairs) -> int:
    """Length of the longest prefix of ``pairs`` with ``r_k = k``."""
    k = 0
    for r, _ in pairs:
        if r != k + 1:
            break
        k += 1
    return k


def rho_zero(Q, rational=True) -> int:
    """Largest ``i`` such that the first ``i`` rows of ``Q`` have rank ``i``."""
    return canonical_form(Q, rational=rational).rho0


def is_canonical(Q0) -> bool:
    """True when ``Q0`` is zero or a 0/1 pattern with increasing rows and distinct columns."""
    A = np.asarray([[float(v) for v in row] for row in Q0], dtype=float)
    if A.size == 0:
        return True
    if not np.all((A == 0) | (A == 1)):
        return False
    if np.any(A.sum(axis=1) > 1) or np.any(A.sum(axis=0) > 1):
        return False
    return True
