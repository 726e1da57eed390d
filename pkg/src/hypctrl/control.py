"""Feedback and open-loop null controls, and numerical checks of null controllability."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IllConditioned, PreconditionViolation
from .lcu import canonical_form, is_canonical
from .mintime import inf_time, sup_time, time_tolerance
from .simulator import (
    Feedback,
    OpenLoop,
    SystemSpec,
    _time_grid,
    l2_norm,
    sample_initial,
    simulate,
    smooth_bump,
)
from .speeds import SpeedProfile, phi_inverse, transport_time, zeta

__all__ = [
    "FeedbackLaw",
    "feedback_law",
    "synthesize_null_control",
    "NullControlReport",
    "verify_null_control",
    "LeastSquaresResult",
    "least_squares_control",
    "ObstructionSet",
    "obstruction_set",
    "adversarial_data",
    "refinement_slope",
    "canonical_data",
]


def _exact(Q):
    arr = np.asarray(Q, dtype=float)
    return bool(np.all(arr == np.round(arr)))


# ---------------------------------------------------------------------------
# feedback


@dataclass(frozen=True)
class FeedbackLaw:
    """``u_i(t) = sum of weight * y_k(t, position)`` over ``taps[i]``.

    ``taps`` maps each controlled component ``i`` (1-based) to a list of
    ``(k, position, weight)`` with ``k > i``.
    """

    taps: dict
    m: int
    settling_time: float

    def as_input(self) -> Feedback:
        taps = [(i - 1, k - 1, pos, w) for i, lst in self.taps.items() for k, pos, w in lst]

        def law(t, Y, x):
            u = np.zeros(self.m)
            for i, k, pos, w in taps:
                u[i] += w * np.interp(pos, x, Y[k])
            return u

        return Feedback(law, self.m)

    def to_json(self):
        return {
            "schema_version": 1,
            "m": self.m,
            "settling_time": self.settling_time,
            "taps": {str(i): [{"component": k, "position": pos, "weight": w} for k, pos, w in lst]
                     for i, lst in self.taps.items()},
        }

    @classmethod
    def from_json(cls, data):
        if data.get("schema_version") != 1:
            raise ValueError("unsupported feedback schema version")
        taps = {int(i): [(int(t["component"]), float(t["position"]), float(t["weight"])) for t in lst]
                for i, lst in data["taps"].items()}
        return cls(taps, int(data["m"]), float(data["settling_time"]))


def feedback_law(profile: SpeedProfile, Q, cf=None) -> FeedbackLaw:
    """Explicit feedback that steers a system without couplings to zero.

    The weights are the strictly upper entries of ``U^{-1}`` from the
    canonical decomposition, negated, and each tap samples component ``k``
    at ``zeta_ik(1)``. With ``M = 0`` and ``G = 0`` the closed loop vanishes
    after :func:`~hypctrl.mintime.inf_time`.
    """
    if cf is None:
        cf = canonical_form(Q, rational=_exact(Q))
    Uinv = np.array([[float(v) for v in row] for row in cf.Uinv])
    m = profile.m
    taps = {}
    for i in range(1, m + 1):
        lst = []
        for k in range(i + 1, m + 1):
            w = -Uinv[i - 1, k - 1]
            if w != 0.0:
                lst.append((k, float(zeta(profile, i, k, 1.0)), float(w)))
        taps[i] = lst
    return FeedbackLaw(taps, m, inf_time(profile, Q, cf))


# ---------------------------------------------------------------------------
# open-loop synthesis


def _negative_trace(profile, j, y0_fun, u_fun, s):
    """``y_j(s, 0)`` for a negative component transported without sources."""
    Tj = transport_time(profile, j)
    s = np.asarray(s, dtype=float)
    early = s < Tj
    out = np.empty_like(s)
    if np.any(early):
        xi = np.asarray(phi_inverse(profile, j, np.clip(s[early], 0.0, Tj)))
        out[early] = y0_fun(xi)
    if np.any(~early):
        out[~early] = u_fun(s[~early] - Tj)
    return out


def synthesize_null_control(system: SystemSpec, y0, T, *, samples=2001, quad=201,
                            grid=2001) -> OpenLoop:
    """Open-loop control bringing a canonical system to rest at time ``T``.

    Requirements: no internal coupling, a canonical boundary matrix, no
    coupling of the negative block to its own traces, positive-block
    coupling vanishing at and below every pivot, and ``T`` at least
    :func:`~hypctrl.mintime.sup_time`.

    The pivot-column controls are built backwards from the last leading
    pivot: each one cancels, along the matching positive characteristic,
    the trace integrals of the controls already fixed. Every other control
    is zero. Traces of the negative components are evaluated in closed form
    since those components are pure transport under the requirements.

    Parameters
    ----------
    system : SystemSpec
    y0 : callable or array
        Initial data; arrays are taken on a uniform grid of ``grid`` points
        unless their length says otherwise.
    T : float
    samples : int
        Number of time samples of the returned control.
    quad : int
        Trapezoid nodes per characteristic integral.

    Returns
    -------
    OpenLoop
    """
    prof = system.profile
    m = prof.m
    Q = system.Q
    if not system.M.zero:
        raise PreconditionViolation("synthesis requires M = 0")
    if not is_canonical(Q):
        raise PreconditionViolation("synthesis requires a boundary matrix in canonical form")
    cf = canonical_form(Q, rational=True)
    pairs = cf.pairs
    probe_x = np.linspace(0.0, 1.0, 257)
    if not system.G.zero:
        Gs = system.G(probe_x)
        if np.any(Gs[:, :m, :] != 0):
            raise PreconditionViolation("synthesis requires G_{--} = 0")
        for r, c in pairs:
            if np.any(Gs[:, m + r - 1:, c - 1] != 0):
                raise PreconditionViolation("G_{+-} must vanish at and below every pivot")
    T_sup = sup_time(prof, Q, cf)
    if T < T_sup - time_tolerance(prof):
        raise PreconditionViolation(f"T = {T:g} is below the required time {T_sup:g}")

    if callable(y0):
        y0_fun = lambda j, x: np.asarray(y0(np.atleast_1d(x)))[j - 1]
    else:
        Y0 = np.asarray(y0, dtype=float)
        xs = np.linspace(0.0, 1.0, Y0.shape[1])
        y0_fun = lambda j, x: np.interp(x, xs, Y0[j - 1])

    t = np.linspace(0.0, T, samples)
    U = np.zeros((m, samples))
    u_of = lambda j: (lambda s: np.interp(s, t, U[j - 1], left=0.0, right=0.0))
    rho0 = cf.rho0
    lead = {pairs[k - 1][1] for k in range(1, rho0 + 1)}
    has_G = not system.G.zero
    if not has_G:
        # every pivot control is zero: nothing is transported into the
        # positive block once the free data has left
        return OpenLoop(t, U)

    for k in range(rho0, 0, -1):
        i = m + k
        c = pairs[k - 1][1]
        Ti = transport_time(prof, i)
        Tc = transport_time(prof, c)
        # sigma = s_in_i(T, x) runs over (T - T_i, T)
        sig = t[(t > T - Ti) & (t < T)]
        if len(sig) == 0:
            continue
        rhs = np.zeros(len(sig))
        frac = np.linspace(0.0, 1.0, quad)
        for chunk in np.array_split(np.arange(len(sig)), max(1, len(sig) // 200)):
            sg = sig[chunk][:, None]
            s = sg + (T - sg) * frac[None, :]
            pos = np.asarray(phi_inverse(prof, i, np.clip(s - sg, 0.0, Ti)))
            grow = system.G(pos)[..., i - 1, :]  # (len, quad, m)
            acc = np.zeros_like(s)
            later = {pairs[kk - 1][1] for kk in range(k + 1, rho0 + 1)}
            for j in range(1, m + 1):
                if j in lead and j not in later:
                    continue
                gj = grow[..., j - 1]
                if not np.any(gj):
                    continue
                trace = _negative_trace(prof, j, lambda x, j=j: y0_fun(j, x), u_of(j), s.ravel())
                acc += gj * trace.reshape(s.shape)
            rhs[chunk] = -np.trapezoid(acc, s, axis=1)
        target = sig - Tc
        keep = target >= 0
        U[c - 1] = np.where((t > T - Ti - Tc) & (t < T - Tc),
                            np.interp(t, target[keep], rhs[keep]) if keep.any() else 0.0,
                            U[c - 1])
    return OpenLoop(t, U)


# ---------------------------------------------------------------------------
# verification


def refinement_slope(hs, residuals):
    """Least-squares slope of ``log(residual)`` against ``log(h)``."""
    hs = np.asarray(hs, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if np.any(r <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(r), 1)[0])


@dataclass
class NullControlReport:
    resolutions: list
    residuals: list
    relative: list
    per_component: list
    slope: float
    y0_norm: float

    @property
    def residual(self):
        return self.residuals[0]

    def to_json(self):
        return {
            "schema_version": 1,
            "resolutions": self.resolutions,
            "residuals": self.residuals,
            "relative": self.relative,
            "per_component": self.per_component,
            "slope": self.slope,
            "y0_norm": self.y0_norm,
        }


def verify_null_control(system: SystemSpec, y0, input, T, resolution=200, halvings=2,
                        **sim_kwargs) -> NullControlReport:
    """Final-state residual of a control and its behaviour under grid refinement.

    Runs the simulation at ``resolution * 2**k`` for ``k = 0..halvings``.
    """
    res_list, rel, comps, norms0 = [], [], [], []
    resolutions = [int(resolution) * 2 ** k for k in range(halvings + 1)]
    for N in resolutions:
        tr = simulate(system, y0, input, T, N, store=False, **sim_kwargs)
        x = tr.x
        y0n = l2_norm(sample_initial(y0, x, system.n), x) if callable(y0) or N == resolution else norms0[0]
        r = tr.final_norm()
        res_list.append(r)
        norms0.append(y0n)
        rel.append(r / y0n if y0n > 0 else 0.0)
        comps.append([l2_norm(tr.final[i], x) for i in range(system.n)])
    slope = refinement_slope([1.0 / N for N in resolutions], res_list) if halvings else float("nan")
    return NullControlReport(resolutions, res_list, rel, comps, slope, norms0[0])


@dataclass
class LeastSquaresResult:
    """Minimizer of the final-state norm over a hat basis of boundary inputs."""

    u: OpenLoop
    residual: float
    free_residual: float
    condition: float
    regularization: float
    coefficients: np.ndarray
    stride: int
    meta: dict = field(default_factory=dict)

    @property
    def relative(self):
        return self.residual / self.free_residual if self.free_residual > 0 else 0.0


def least_squares_control(system: SystemSpec, y0, T, resolution=200, *, stride=1,
                          assembly="shift", cond_limit=1e12, cfl=1.0) -> LeastSquaresResult:
    """Boundary input minimizing ``||y(T)||`` over piecewise-linear controls.

    The basis consists of hat functions on every ``stride``-th node of the
    simulation time grid, one family per controlled component. The scheme
    is time invariant, so in the default ``"shift"`` assembly the response
    at ``T`` to a hat centred at ``t_j`` is read off a single simulation of
    the first interior hat at the time level ``T - t_{j-1}``; the half hat at
    ``t = 0`` needs its own run. ``assembly="direct"`` runs one simulation
    per basis function.

    The weighted normal equations (trapezoid weights in ``x``) are solved
    with a diagonal shift of ``1e-12`` times their trace.

    Raises
    ------
    IllConditioned
        If the condition estimate of the shifted normal matrix exceeds ``cond_limit``.
    """
    prof = system.profile
    n, m = prof.n, prof.m
    N = int(resolution)
    Nt, dt = _time_grid(system, T, N, cfl)
    t = np.linspace(0.0, T, Nt + 1)
    stride = max(1, int(stride))
    J = Nt // stride
    width = stride * dt
    wts = np.full(N + 1, 1.0 / N)
    wts[[0, -1]] *= 0.5
    sq = np.sqrt(np.tile(wts, n))
    zero0 = np.zeros((n, N + 1))

    free = simulate(system, y0, None, T, N, store=False, cfl=cfl)
    b = free.final.ravel() * sq

    def hat(center):
        return lambda s: np.clip(1.0 - np.abs(s - center) / width, 0.0, None)

    def run(c, center, store):
        def f(s, c=c):
            out = np.zeros((m, len(s)))
            out[c] = hat(center)(s)
            return out
        knots = np.unique(np.clip(np.concatenate([t, [center - width, center, center + width]]), 0.0, T))
        u = OpenLoop(knots, f(knots))
        return simulate(system, zero0, u, T, N, store=store, cfl=cfl)

    cols = np.zeros((n * (N + 1), m * (J + 1)))
    for c in range(m):
        cols[:, c * (J + 1)] = run(c, 0.0, False).final.ravel()
        if assembly == "shift":
            tr = run(c, t[stride], True)
            for j in range(1, J + 1):
                cols[:, c * (J + 1) + j] = tr.values[Nt - (j - 1) * stride].ravel()
        elif assembly == "direct":
            for j in range(1, J + 1):
                cols[:, c * (J + 1) + j] = run(c, t[j * stride], False).final.ravel()
        else:
            raise ValueError(f"unknown assembly mode {assembly!r}")
    A = cols * sq[:, None]
    H = A.T @ A
    reg = 1e-12 * float(np.trace(H))
    if reg == 0.0:
        reg = 1e-300
    H[np.diag_indices_from(H)] += reg
    cond = float(np.linalg.cond(H))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditioned(f"normal equations condition estimate {cond:.3g} exceeds {cond_limit:g}")
    alpha = np.linalg.solve(H, -(A.T @ b))
    resid = float(np.linalg.norm(A @ alpha + b))
    free_norm = float(np.linalg.norm(b))
    # controls sampled on the simulation grid reproduce the hats exactly
    vals = np.zeros((m, Nt + 1))
    for c in range(m):
        for j in range(J + 1):
            vals[c] += alpha[c * (J + 1) + j] * hat(t[j * stride])(t)
    return LeastSquaresResult(OpenLoop(t, vals), resid, free_norm, cond, reg, alpha, stride,
                              {"dt": dt, "steps": Nt, "basis_size": m * (J + 1)})


# ---------------------------------------------------------------------------
# obstruction data


@dataclass(frozen=True)
class ObstructionSet:
    """Interval ``(lo, hi)`` of component ``component`` whose initial data
    cannot be steered to zero by time ``T``."""

    component: int
    lo: float
    hi: float
    reason: str


def obstruction_set(profile: SpeedProfile, Q, T) -> Optional[ObstructionSet]:
    """Support for initial data that blocks null control at time ``T``.

    If some transport time exceeds ``T`` the set holds the initial
    positions whose characteristics are still inside at ``T`` without
    having met the inflow boundary. Otherwise it is the
    part of the pivot column component whose data reaches the inflow of the
    slowest pivot row too late. For a boundary matrix that is not canonical
    the set refers to the canonical coordinates. Returns ``None`` when ``T``
    is at least :func:`~hypctrl.mintime.inf_time`.
    """
    cf = canonical_form(Q, rational=_exact(Q))
    if T >= inf_time(profile, Q, cf):
        return None
    m = profile.m
    times = profile.times
    slow = int(np.argmax(times)) + 1
    if T < times[slow - 1]:
        Ti = times[slow - 1]
        # feet at t = 0 of the characteristics that have not met the inflow by T
        if slow <= m:
            return ObstructionSet(slow, float(phi_inverse(profile, slow, T)), 1.0, "transport")
        return ObstructionSet(slow, 0.0, float(phi_inverse(profile, slow, Ti - T)), "transport")
    best = max(cf.pairs, key=lambda rc: times[m + rc[0] - 1] + times[rc[1] - 1])
    r, c = best
    Ti = times[m + r - 1]
    lo = float(phi_inverse(profile, c, max(T - Ti, 0.0)))
    return ObstructionSet(c, lo, 1.0, f"pivot ({r},{c})")


def adversarial_data(profile: SpeedProfile, Q, T, kind="indicator", margin=0.0):
    """Initial data supported in :func:`obstruction_set`; returns ``x -> (n, len(x))``.

    ``kind="bump"`` gives a smooth bump, shrunk by ``margin`` on each side.
    """
    obs = obstruction_set(profile, Q, T)
    if obs is None:
        raise PreconditionViolation("T is not below the smallest control time")
    n = profile.n
    lo, hi = obs.lo + margin, obs.hi - margin

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros((n,) + x.shape)
        if kind == "indicator":
            out[obs.component - 1] = ((x > lo) & (x < hi)).astype(float)
        elif kind == "bump":
            out[obs.component - 1] = smooth_bump(x, lo, hi)
        else:
            raise ValueError(f"unknown data kind {kind!r}")
        return out

    return f


def canonical_data(profile: SpeedProfile, Q, ytilde):
    """Initial data whose image in the canonical coordinates of ``Q`` is ``ytilde``.

    Data of the form ``ytilde`` with smooth compactly supported components
    is compatible with every boundary condition at the corners.
    """
    from .simulator import BoundaryTransformRecord

    cf = canonical_form(Q, rational=_exact(Q)).as_float()
    return BoundaryTransformRecord(profile, np.asarray(cf.L), np.asarray(cf.U),
                                   np.asarray(cf.Uinv)).pull_back(ytilde)
