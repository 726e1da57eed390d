"""A 3x3 family whose null controllability at the critical time depends on ``ab``.

Speeds ``(-1, -1/2, 1)``, boundary matrix ``(1, 0)`` and trace coupling
``g_21 = a``, ``g_32 = b``. The minimal control time is 2 for every
``(a, b)``, but at ``T = 2`` exactly the system is null controllable iff
``ab`` avoids ``{-(pi/2 + k pi)^2}``. Control at ``T = 2`` reduces to the
second-kind integral equation

    u(t) + ab * int_0^1 (1 - max(t, s)) u(s) ds = f(t),   t in (0, 1).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, solve_ivp
from scipy.optimize import brentq

from .errors import NearSingular
from .fields import MatrixField
from .simulator import OpenLoop, SystemSpec, smooth_bump
from .speeds import constant_profile

__all__ = [
    "CounterexampleSpec",
    "closed_form_solution",
    "CriticalProduct",
    "critical_products",
    "shooting_residual",
    "FredholmResult",
    "fredholm_matrix",
    "fredholm_solve",
    "condition_sweep",
    "localize_critical",
    "forcing",
    "T2Controls",
    "null_control_t2",
    "verify_t2",
    "fredholm_obstruction",
    "manufactured_data",
    "witness_data",
]

SPEEDS = (-1.0, -0.5, 1.0)
NEAR_SINGULAR_COND = 1e12
# dt = 2h moves every characteristic an integer number of cells per step
ALIGNED_CFL = 2.0


@dataclass(frozen=True)
class CounterexampleSpec:
    """Couplings ``a = g_21`` and ``b = g_32``; speeds and ``Q`` are fixed."""

    a: float
    b: float

    @property
    def ab(self):
        return self.a * self.b

    def profile(self):
        return constant_profile(SPEEDS, 2)

    def system(self) -> SystemSpec:
        G = np.array([[0.0, 0.0], [self.a, 0.0], [0.0, self.b]])
        return SystemSpec(self.profile(), np.array([[1.0, 0.0]]), None, MatrixField.constant(G))


# ---------------------------------------------------------------------------
# closed form


_QUAD = dict(epsabs=1e-12, epsrel=1e-10, limit=200)


def _integrate(f, lo, hi, points=()):
    if hi <= lo:
        return 0.0
    pts = [p for p in points if lo < p < hi]
    return quad(f, lo, hi, points=pts or None, **_QUAD)[0]


class _Traces:
    """Boundary traces ``y_1(s, 0)`` and ``y_2(s, 0)`` with cached integrals."""

    def __init__(self, spec, y0, u):
        self.a, self.b = spec.a, spec.b
        self.y0 = y0
        self.u = u

    def y1(self, s):
        return self.u[0](s - 1.0) if s >= 1.0 else self.y0[0](s)

    def Y1(self, lo, hi):
        """``int_lo^hi y_1(s, 0) ds``."""
        return _integrate(self.y1, lo, hi, (1.0,))

    def y2(self, s):
        if s >= 2.0:
            return self.u[1](s - 2.0) + self.a * self.Y1(s - 2.0, s)
        return self.y0[1](s / 2.0) + self.a * self.Y1(0.0, s)

    def _Y1_window(self, lo, hi, w):
        """``int_lo^hi int_{s-w}^s y_1(r, 0) dr ds`` as one weighted integral."""
        start = max(0.0, lo - w)
        weight = lambda r: max(0.0, min(hi, r + w) - max(lo, r))
        return _integrate(lambda r: self.y1(r) * weight(r), start, hi, (1.0, lo, lo - w, hi - w))

    def Y2(self, lo, hi):
        """``int_lo^hi y_2(s, 0) ds``."""
        total = 0.0
        if lo < 2.0:
            b = min(hi, 2.0)
            total += 2.0 * _integrate(self.y0[1], lo / 2.0, b / 2.0)
            total += self.a * self._Y1_window(lo, b, np.inf)
        if hi > 2.0:
            c = max(lo, 2.0)
            total += _integrate(self.u[1], c - 2.0, hi - 2.0)
            total += self.a * self._Y1_window(c, hi, 2.0)
        return total


def closed_form_solution(spec: CounterexampleSpec, y0, u, t, x):
    """Exact ``(y1, y2, y3)`` at ``(t, x)`` from the explicit characteristic formulas.

    Parameters
    ----------
    y0 : sequence of three callables
    u : sequence of two callables
    t, x : float or array_like
        Broadcast against each other.
    """
    tr = _Traces(spec, y0, u)
    a, b = spec.a, spec.b

    def point(t, x):
        if t - 1 + x >= 0:
            y1 = u[0](t - 1 + x)
        else:
            y1 = y0[0](t + x)
        if t - 2 * (1 - x) >= 0:
            s0 = t - 2 * (1 - x)
            y2 = u[1](s0) + a * tr.Y1(s0, t)
        else:
            y2 = y0[1](t / 2 + x) + a * tr.Y1(0.0, t)
        if t - x >= 0:
            y3 = tr.y1(t - x) + b * tr.Y2(t - x, t)
        else:
            y3 = y0[2](x - t) + b * tr.Y2(0.0, t)
        return y1, y2, y3

    tt, xx = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    out = np.array([point(float(a_), float(b_)) for a_, b_ in zip(tt.ravel(), xx.ravel())])
    return tuple(out[:, i].reshape(tt.shape) for i in range(3))


# ---------------------------------------------------------------------------
# critical set


@dataclass(frozen=True)
class CriticalProduct:
    k: int
    analytic: float
    shooting: float


def shooting_residual(ab):
    """``alpha(1)`` for ``alpha'' = ab * alpha``, ``alpha(0) = 1``, ``alpha'(0) = 0``."""
    sol = solve_ivp(lambda s, y: [y[1], ab * y[0]], (0.0, 1.0), [1.0, 0.0],
                    method="DOP853", rtol=1e-12, atol=1e-13)
    return float(sol.y[0, -1])


def critical_products(k_max, shooting=True):
    """Critical values ``-(pi/2 + k pi)^2`` for ``k = 0..k_max``.

    With ``shooting=True`` each value is also located independently by
    integrating the eigenvalue ODE and root-finding on ``omega = sqrt(-ab)``.
    """
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    analytic = [-(math.pi / 2 + k * math.pi) ** 2 for k in range(k_max + 1)]
    if not shooting:
        return [CriticalProduct(k, v, float("nan")) for k, v in enumerate(analytic)]
    F = lambda w: shooting_residual(-w * w)
    roots = []
    step = 0.05
    w = 1e-3
    fw = F(w)
    while len(roots) <= k_max:
        w2 = w + step
        f2 = F(w2)
        if fw == 0.0 or fw * f2 < 0:
            r = w if fw == 0.0 else brentq(F, w, w2, xtol=1e-14, rtol=1e-15)
            roots.append(-r * r)
        w, fw = w2, f2
    return [CriticalProduct(k, analytic[k], roots[k]) for k in range(k_max + 1)]


def _nearest_critical(ab):
    if ab >= 0:
        return None
    w = math.sqrt(-ab)
    k = max(0, round(w / math.pi - 0.5))
    return k, -(math.pi / 2 + k * math.pi) ** 2


# ---------------------------------------------------------------------------
# integral equation


def fredholm_matrix(ab, n, rule="trapezoid"):
    """Discretization ``(nodes, A)`` of ``u + ab V u`` with ``V u = int (1 - max(t, s)) u(s) ds``.

    ``"trapezoid"`` collocates a piecewise-linear ``u`` at the ``n + 1``
    uniform nodes with exact product-integration weights; ``"midpoint"`` is
    the Nystrom method at the ``n`` cell midpoints.
    """
    if rule == "trapezoid":
        t = np.linspace(0.0, 1.0, n + 1)
        d = 1.0 / n
        W = np.zeros((n + 1, n + 1))
        for j in range(n + 1):
            # left half of the hat rises on [t_{j-1}, t_j], right half falls on [t_j, t_{j+1}]
            if j > 0:
                lo = t[j - 1]
                below = t[:, None] >= t[j]  # whole half lies left of t_i
                W[:, j] += np.where(below[:, 0], (1 - t) * d / 2, d * ((1 - lo) / 2 - d / 3))
            if j < n:
                lo = t[j]
                below = t >= t[j + 1]
                W[:, j] += np.where(below, (1 - t) * d / 2, d * ((1 - lo) / 2 - d / 6))
        return t, np.eye(n + 1) + ab * W
    if rule == "midpoint":
        t = (np.arange(n) + 0.5) / n
        K = 1.0 - np.maximum(t[:, None], t[None, :])
        return t, np.eye(n) + ab * K / n
    raise ValueError(f"unknown rule {rule!r}")


@dataclass
class FredholmResult:
    t: np.ndarray
    u: np.ndarray
    condition: float
    rule: str

    def __call__(self, s):
        return np.interp(s, self.t, self.u)


def fredholm_solve(ab, f, n=512, rule="trapezoid", cond_limit=NEAR_SINGULAR_COND) -> FredholmResult:
    """Solve ``u(t) + ab int_t^1 int_0^s u = f(t)`` on (0, 1).

    Parameters
    ----------
    ab : float or CounterexampleSpec
    f : callable
    n : int
        Number of cells, at least 16.

    Raises
    ------
    NearSingular
        If the 2-norm condition number exceeds ``cond_limit``.
    """
    if isinstance(ab, CounterexampleSpec):
        ab = ab.ab
    if n < 16:
        raise ValueError("need at least 16 quadrature cells")
    t, A = fredholm_matrix(ab, n, rule)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > cond_limit:
        raise NearSingular(f"integral operator is numerically singular (cond {cond:.3g})")
    u = np.linalg.solve(A, np.asarray(f(t), dtype=float) * np.ones_like(t))
    return FredholmResult(t, u, cond, rule)


def _sweep_point(ab, n, rule):
    t, A = fredholm_matrix(ab, n, rule)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    rhs = np.ones_like(t)
    u, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    resid = float(np.linalg.norm(A @ u - rhs) / np.linalg.norm(rhs))
    return ab, cond, resid


def _threads():
    try:
        return max(1, int(os.environ.get("HYPCTRL_THREADS", "1")))
    except ValueError:
        return 1


def condition_sweep(lo, hi, steps, n=512, rule="trapezoid"):
    """Rows ``(ab, condition, residual)`` over a uniform grid of ``ab`` values.

    ``residual`` is the relative residual of the least-squares solve with
    ``f = 1``. Work is spread over ``HYPCTRL_THREADS`` threads.
    """
    grid = np.linspace(lo, hi, int(steps))
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(lambda v: _sweep_point(float(v), n, rule), grid))
    return rows


def localize_critical(lo, hi, n=512, rule="trapezoid", tol=1e-10):
    """Critical ``ab`` of the discrete operator inside ``[lo, hi]``.

    The condition spike is bracketed on a coarse sweep and refined by
    bisection on the sign of the determinant.
    """
    sign = lambda v: np.linalg.slogdet(fredholm_matrix(v, n, rule)[1])[0]
    grid = np.linspace(lo, hi, 41)
    signs = [sign(v) for v in grid]
    for j in range(len(grid) - 1):
        if signs[j] != signs[j + 1]:
            a, b = grid[j], grid[j + 1]
            sa = signs[j]
            while b - a > tol:
                mid = 0.5 * (a + b)
                sm = sign(mid)
                if sm == sa:
                    a = mid
                else:
                    b = mid
            return 0.5 * (a + b)
    raise ValueError("no sign change of the determinant in the bracket")


# ---------------------------------------------------------------------------
# control at the critical time


def _primitive(func, fine=65537):
    """Callable ``x -> int_0^x func`` on [0, 1] from a fine cumulative trapezoid."""
    g = np.linspace(0.0, 1.0, fine)
    c = cumulative_trapezoid(np.asarray(func(g), dtype=float) * np.ones_like(g), g, initial=0.0)
    return lambda x: np.interp(x, g, c)


def forcing(spec: CounterexampleSpec, y0):
    """Right-hand side ``f`` of the integral equation, built from the initial data."""
    P1 = _primitive(y0[0])
    P2 = _primitive(y0[1])
    m1 = float(P1(1.0))
    b = spec.b

    def f(t):
        t = np.asarray(t, dtype=float)
        # int_{1+t}^2 y2^0(s/2) ds = 2 int_{(1+t)/2}^1 y2^0
        tail = 2.0 * (P2(1.0) - P2((1.0 + t) / 2.0))
        return -b * tail - spec.ab * (1.0 - t) * m1

    return f


def fredholm_obstruction(ab, f, rtol=1e-9, ctol=1e-8):
    """Relative pairing ``<alpha_k, f>`` when ``ab`` lies on the critical set, else ``None``.

    ``alpha_k(t) = cos((pi/2 + k pi) t)`` spans the kernel of the adjoint
    problem at the critical value ``-(pi/2 + k pi)^2``.
    """
    near = _nearest_critical(ab)
    if near is None or abs(ab - near[1]) > ctol * abs(near[1]):
        return None
    w = math.pi / 2 + near[0] * math.pi
    alpha = lambda s: math.cos(w * s)
    fs = lambda s: float(np.asarray(f(np.array([s]))).ravel()[0])
    pair = _integrate(lambda s: alpha(s) * fs(s), 0.0, 1.0)
    na = math.sqrt(_integrate(lambda s: alpha(s) ** 2, 0.0, 1.0))
    nf = math.sqrt(_integrate(lambda s: fs(s) ** 2, 0.0, 1.0))
    return abs(pair) / (na * nf) if nf > 0 else 0.0


@dataclass
class T2Controls:
    u: OpenLoop
    u1: FredholmResult
    f: np.ndarray
    meta: dict = field(default_factory=dict)


def null_control_t2(spec: CounterexampleSpec, y0, n=512, rule="trapezoid") -> T2Controls:
    """Controls ``(u1, u2)`` steering the family to zero at ``T = 2``.

    ``u1`` solves the integral equation on (0, 1) and vanishes on (1, 2);
    ``u2(t) = -a int_t^2 y1(s, 0) ds``.

    Raises
    ------
    NearSingular
        When ``ab`` is critical and ``f`` is not orthogonal to the adjoint
        kernel (no control exists), or when the discrete operator is
        numerically singular.
    """
    f = forcing(spec, y0)
    pairing = fredholm_obstruction(spec.ab, f)
    if pairing is not None and pairing > 1e-8:
        raise NearSingular(f"ab = {spec.ab:.10g} is critical and the data is not orthogonal "
                           f"to the adjoint kernel (relative pairing {pairing:.3g})")
    sol = fredholm_solve(spec.ab, f, n, rule)
    if rule != "trapezoid":
        nodes = np.linspace(0.0, 1.0, n + 1)
        sol = FredholmResult(nodes, np.interp(nodes, sol.t, sol.u), sol.condition, rule)
    t1 = sol.t
    t = np.concatenate([t1, 1.0 + t1[1:]])
    u1 = np.concatenate([sol.u, np.zeros(n)])
    # int_t^2 y1(s, 0) ds: initial data on (0, 1), u1(s - 1) on (1, 2)
    P1 = _primitive(y0[0])
    seg = np.where(t[:-1] < 1.0, P1(np.minimum(t[1:], 1.0)) - P1(np.minimum(t[:-1], 1.0)), 0.0)
    d = np.diff(t)
    seg += np.where(t[:-1] >= 1.0, 0.5 * d * (np.interp(t[:-1] - 1.0, t1, sol.u) + np.interp(t[1:] - 1.0, t1, sol.u)), 0.0)
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    u2 = -spec.a * tail
    return T2Controls(OpenLoop(t, np.vstack([u1, u2])), sol, np.asarray(f(t1)),
                      {"condition": sol.condition, "pairing": pairing})


def verify_t2(spec: CounterexampleSpec, y0, controls: T2Controls, resolution=200, halvings=0,
              cfl=ALIGNED_CFL):
    """Simulate the controlled family up to ``T = 2``; returns a null-control report.

    The default time step is aligned with all three characteristic speeds so
    that transport itself is exact and the residual measures the controls.
    """
    from .control import verify_null_control

    Y0 = lambda x: np.array([np.asarray(g(x), dtype=float) * np.ones_like(x) for g in y0])
    return verify_null_control(spec.system(), Y0, controls.u, 2.0, resolution, halvings, cfl=cfl)


# ---------------------------------------------------------------------------
# test data


def manufactured_data(spec: CounterexampleSpec, u_star=None, y3=None):
    """Smooth compatible initial data whose critical-time control is ``u_star``.

    ``f = u_star + ab V u_star`` and ``y2^0(x) = f'(2x - 1) / b`` on
    [1/2, 1], zero elsewhere; ``y1^0 = 0``. Requires ``b != 0``.

    Returns
    -------
    (list of three callables, callable u_star)
    """
    if spec.b == 0:
        raise ValueError("manufactured data needs b != 0")
    if u_star is None:
        u_star = lambda s: smooth_bump(s, 0.1, 0.9)
    ab, b = spec.ab, spec.b
    # f' = u' - ab int_0^t u, tabulated on a fine grid
    s = np.linspace(0.0, 1.0, 20001)
    us = np.asarray(u_star(s), dtype=float)
    fp = np.gradient(us, s, edge_order=2) - ab * cumulative_trapezoid(us, s, initial=0.0)

    def y2(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0.5, np.interp(2 * x - 1, s, fp) / b, 0.0)
        return out if out.ndim else float(out)

    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    third = y3 if y3 is not None else zero
    return [zero, y2, third], u_star


def witness_data(spec: CounterexampleSpec, f=None):
    """Initial data realizing a given ``f`` (a smooth bump by default): ``y1^0 = 0``,
    ``y2^0(x) = f'(2x - 1) / b`` on [1/2, 1]."""
    if spec.b == 0:
        raise ValueError("witness data needs b != 0")
    if f is None:
        f = lambda s: smooth_bump(s, 0.2, 0.8)
    b = spec.b

    def y2(x):
        x = np.asarray(x, dtype=float)
        h = 1e-6
        s = 2 * x - 1
        out = np.where(x >= 0.5, (f(s + h) - f(s - h)) / (2 * h) / b, 0.0)
        return out if out.ndim else float(out)

    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return [zero, y2, zero]
