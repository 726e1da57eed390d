"""Shared fixtures and hypothesis strategies."""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from hypctrl.speeds import validate_profile

FIXTURES = Path(__file__).parent / "fixtures"

Q1 = [[0, 1, 2], [0, 2, 5], [0, 1, 2], [4, -4, 4]]
Q2 = [[1, 1, -1, 2], [3, 5, -1, 8], [0, 1, 1, 1], [-1, 3, 6, 4]]
LAMBDA7 = (-4.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0)
LAMBDA6 = (-4.0, -2.0, -1.0, 1.0, 2.0, 3.0)
Q6 = [[1, -1, -1], [1, 0, 2], [1, 1, 1]]


@pytest.fixture
def fixture_path():
    return lambda name: str(FIXTURES / name)


def random_profile(rng, m, p, pieces=3):
    """Random ordered piecewise-linear speeds with the given family sizes.

    Speeds are built as cumulative sums of positive gaps at each breakpoint,
    so ordering and signs hold everywhere by linearity.
    """
    n = m + p
    xs = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, pieces - 1)), [1.0]])
    vals = np.empty((n, len(xs)))
    for k in range(len(xs)):
        neg = -np.cumsum(rng.uniform(0.2, 2.0, m))[::-1]
        pos = np.cumsum(rng.uniform(0.2, 2.0, p))
        vals[:, k] = np.concatenate([neg, pos])
    raw = [[[float(x), float(v)] for x, v in zip(xs, vals[i])] for i in range(n)]
    return validate_profile(raw, m)


@st.composite
def profiles(draw, m=None, p=None, max_m=4, max_p=4):
    mm = m if m is not None else draw(st.integers(1, max_m))
    pp = p if p is not None else draw(st.integers(1, max_p))
    seed = draw(st.integers(0, 2**32 - 1))
    pieces = draw(st.integers(1, 4))
    return random_profile(np.random.default_rng(seed), mm, pp, pieces)


@st.composite
def integer_matrices(draw, p, m, lo=-3, hi=3, sparsity=0.4):
    rows = []
    for _ in range(p):
        row = []
        for _ in range(m):
            zero = draw(st.floats(0, 1)) < sparsity
            row.append(0 if zero else draw(st.integers(lo, hi)))
        rows.append(row)
    return rows


@st.composite
def profile_and_q(draw, max_m=4, max_p=4):
    prof = draw(profiles(max_m=max_m, max_p=max_p))
    Q = draw(integer_matrices(prof.p, prof.m))
    return prof, Q
