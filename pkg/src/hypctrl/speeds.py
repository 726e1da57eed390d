"""Piecewise-linear speed profiles and their characteristic geometry.

Every speed is stored as a list of breakpoints ``(x_j, lambda_j)`` and is
affine in between. All travel-time quantities are integrals of ``1/|lambda|``
and are evaluated with the exact per-piece logarithm, so nothing downstream
carries quadrature error from the speeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OrderViolation, RangeError, SignViolation

__all__ = [
    "PiecewiseLinear",
    "SpeedProfile",
    "validate_profile",
    "constant_profile",
    "transport_time",
    "transport_times",
    "phi",
    "phi_inverse",
    "zeta",
    "entry_exit_times",
    "characteristic",
]

EPS_FLOOR = 1e-6
# below this relative slope a piece is treated as constant
_FLAT_SLOPE = 1e-14


@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear scalar function on [0, 1]."""

    xs: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "vals", vals)

    @classmethod
    def constant(cls, value):
        return cls(np.array([0.0, 1.0]), np.array([value, value], dtype=float))

    def __call__(self, x):
        return np.interp(x, self.xs, self.vals)

    @property
    def is_constant(self):
        return bool(np.all(self.vals == self.vals[0]))

    def to_pairs(self):
        return [[float(a), float(b)] for a, b in zip(self.xs, self.vals)]


class _TravelTime:
    """Exact antiderivative of ``1/|lambda|`` for one piecewise-linear speed."""

    def __init__(self, speed: PiecewiseLinear):
        xs = speed.xs
        a = np.abs(speed.vals)
        self.xs = xs
        self.a0 = a[:-1]
        dx = np.diff(xs)
        self.slope = np.diff(a) / dx
        self.flat = np.abs(self.slope) <= _FLAT_SLOPE * np.maximum(1.0, self.a0)
        pieces = self._piece_integral(np.arange(len(dx)), dx)
        self.cum = np.concatenate([[0.0], np.cumsum(pieces)])

    def _piece_integral(self, j, d):
        a0 = self.a0[j]
        s = self.slope[j]
        flat = self.flat[j]
        safe = np.where(flat, 1.0, s)
        curved = np.log1p(safe * d / a0) / safe
        return np.where(flat, d / a0, curved)

    def _piece_inverse(self, j, tau):
        a0 = self.a0[j]
        s = self.slope[j]
        flat = self.flat[j]
        safe = np.where(flat, 1.0, s)
        curved = a0 * np.expm1(safe * tau) / safe
        return np.where(flat, a0 * tau, curved)

    @property
    def total(self):
        return float(self.cum[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        j = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.a0) - 1)
        return self.cum[j] + self._piece_integral(j, x - self.xs[j])

    def inverse(self, tau):
        tau = np.asarray(tau, dtype=float)
        j = np.clip(np.searchsorted(self.cum, tau, side="right") - 1, 0, len(self.a0) - 1)
        x = self.xs[j] + self._piece_inverse(j, tau - self.cum[j])
        return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class SpeedProfile:
    """Validated diagonal speed matrix with ``m`` negative and ``p`` positive speeds.

    Components are indexed from 1 in every public function, matching the
    usual ``lambda_1 < ... < lambda_m < 0 < lambda_{m+1} < ... < lambda_n``
    convention.
    """

    speeds: tuple
    m: int
    eps: float
    _tables: tuple = field(repr=False, compare=False, default=())

    def __post_init__(self):
        if not self._tables:
            object.__setattr__(self, "_tables", tuple(_TravelTime(s) for s in self.speeds))

    @property
    def n(self):
        return len(self.speeds)

    @property
    def p(self):
        return self.n - self.m

    @property
    def times(self):
        """Transport times ``(T_1, ..., T_n)``."""
        return np.array([t.total for t in self._tables])

    @property
    def breakpoints(self):
        return np.unique(np.concatenate([s.xs for s in self.speeds]))

    def is_negative(self, i):
        return i <= self.m

    def speed(self, i, x):
        """Evaluate ``lambda_i(x)``."""
        return self.speeds[self._check(i)](x)

    def speeds_at(self, x):
        """All speeds at ``x``; shape ``x.shape + (n,)``."""
        return np.stack([s(x) for s in self.speeds], axis=-1)

    def table(self, i):
        return self._tables[self._check(i)]

    def _check(self, i):
        if not 1 <= i <= self.n:
            raise IndexError(f"component index {i} outside 1..{self.n}")
        return i - 1

    def to_raw(self):
        out = []
        for s in self.speeds:
            out.append(float(s.vals[0]) if s.is_constant else s.to_pairs())
        return out


def _as_speed(raw, index):
    if np.isscalar(raw):
        return PiecewiseLinear.constant(float(raw))
    pts = np.asarray(raw, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DomainError(f"speed {index}: expected a constant or a list of [x, lambda] pairs")
    xs, vals = pts[:, 0], pts[:, 1]
    if xs[0] != 0.0 or xs[-1] != 1.0:
        raise DomainError(f"speed {index}: breakpoints must start at 0 and end at 1")
    if np.any(np.diff(xs) <= 0):
        raise DomainError(f"speed {index}: breakpoints must be strictly increasing")
    return PiecewiseLinear(xs, vals)


def validate_profile(raw, m, eps_floor=EPS_FLOOR) -> SpeedProfile:
    """Build a :class:`SpeedProfile` from per-component breakpoint data.

    Parameters
    ----------
    raw
        One entry per component: a number (constant speed) or a list of
        ``[x, lambda]`` pairs with ``x`` strictly increasing from 0 to 1.
    m
        Number of negative speeds; the remaining ``len(raw) - m`` are positive.
    eps_floor
        Smallest admissible ``|lambda_i(x)|``.

    Raises
    ------
    DomainError, SignViolation, OrderViolation
    """
    speeds = tuple(_as_speed(r, k + 1) for k, r in enumerate(raw))
    n = len(speeds)
    if not 1 <= m < n:
        raise DomainError(f"need m >= 1 negative and p >= 1 positive speeds (m={m}, n={n})")
    # pw-linear differences only change slope at the union of breakpoints
    grid = np.unique(np.concatenate([s.xs for s in speeds]))
    grid = np.union1d(grid, 0.5 * (grid[1:] + grid[:-1]))
    vals = np.stack([s(grid) for s in speeds])
    for i in range(n):
        sign = -1.0 if i < m else 1.0
        if np.any(sign * vals[i] <= 0):
            raise SignViolation(f"speed {i + 1} must be {'negative' if sign < 0 else 'positive'} on [0, 1]")
    eps = float(np.min(np.abs(vals)))
    if eps < eps_floor:
        raise SignViolation(f"min |lambda| = {eps:g} is below the floor {eps_floor:g}")
    bad = np.nonzero(np.any(np.diff(vals, axis=0) <= 0, axis=1))[0]
    if len(bad):
        i = int(bad[0])
        x = grid[np.argmax(vals[i + 1] <= vals[i])]
        raise OrderViolation(f"lambda_{i + 1} < lambda_{i + 2} fails at x = {x:g}")
    return SpeedProfile(speeds, int(m), eps)


def constant_profile(values, m) -> SpeedProfile:
    """Shorthand for a profile of constant speeds."""
    return validate_profile([float(v) for v in values], m)


def transport_time(profile: SpeedProfile, i) -> float:
    """Time ``T_i`` for the i-th characteristic to cross [0, 1]."""
    return profile.table(i).total


def transport_times(profile: SpeedProfile) -> np.ndarray:
    return profile.times


def phi(profile: SpeedProfile, i, x):
    """Travel-time coordinate ``phi_i(x) = int_0^x dxi / |lambda_i(xi)|``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < -1e-14) | (x > 1 + 1e-14)):
        raise RangeError("position outside [0, 1]")
    out = profile.table(i)(np.clip(x, 0.0, 1.0))
    return out if out.ndim else float(out)


def phi_inverse(profile: SpeedProfile, i, tau):
    """Position ``x`` with ``phi_i(x) = tau``, for ``tau`` in ``[0, T_i]``."""
    table = profile.table(i)
    tau = np.asarray(tau, dtype=float)
    slack = 1e-13 * max(1.0, table.total)
    if np.any((tau < -slack) | (tau > table.total + slack)):
        raise RangeError(f"travel time outside [0, T_{i}] = [0, {table.total:g}]")
    out = table.inverse(np.clip(tau, 0.0, table.total))
    return out if out.ndim else float(out)


def zeta(profile: SpeedProfile, i, j, x):
    """Position on speed ``j`` reached in the travel time of speed ``i`` to ``x``.

    ``zeta_ij(x) = phi_j^{-1}(phi_i(x))``; both indices must lie in the same
    family and ``phi_i(x) <= T_j`` must hold (``i <= j`` for negative speeds,
    ``j <= i`` for positive ones).
    """
    if profile.is_negative(i) != profile.is_negative(j):
        raise IndexError(f"zeta_{i}{j} mixes the negative and positive families")
    tau = np.asarray(phi(profile, i, x))
    tj = transport_time(profile, j)
    if np.any(tau > tj * (1 + 1e-13) + 1e-15):
        raise IndexError(f"zeta_{i}{j} leaves [0, 1]: T_{i} exceeds T_{j}")
    return phi_inverse(profile, j, np.minimum(tau, tj))


def entry_exit_times(profile: SpeedProfile, i, t, x):
    """Entry and exit times of the characteristic of speed ``i`` through ``(t, x)``."""
    ph = phi(profile, i, x)
    ti = transport_time(profile, i)
    if profile.is_negative(i):
        return t - (ti - ph), t + ph
    return t - ph, t + (ti - ph)


def characteristic(profile: SpeedProfile, i, s, t, x):
    """Position ``chi_i(s; t, x)`` of the characteristic through ``(t, x)`` at time ``s``."""
    s = np.asarray(s, dtype=float)
    s_in, s_out = entry_exit_times(profile, i, t, x)
    slack = 1e-12 * max(1.0, abs(t))
    if np.any((s < np.asarray(s_in) - slack) | (s > np.asarray(s_out) + slack)):
        raise RangeError("time outside the characteristic's life in [0, 1]")
    ph = phi(profile, i, x)
    # negative speeds move towards x = 0 as time increases
    tau = ph - (s - t) if profile.is_negative(i) else ph + (s - t)
    return phi_inverse(profile, i, np.clip(tau, 0.0, transport_time(profile, i)))
