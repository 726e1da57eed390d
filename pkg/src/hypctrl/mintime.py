"""Envelope of minimal null control times and related comparison bounds.

For a speed profile and boundary matrix ``Q`` the minimal control time over
all internal couplings ``M`` lies between :func:`inf_time` and
:func:`sup_time`; both are maxima of sums of transport times selected by the
pivot positions of the canonical form of ``Q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .fields import MatrixField
from .lcu import CanonicalForm, canonical_form
from .speeds import SpeedProfile

__all__ = [
    "Term",
    "TimeReport",
    "inf_time",
    "sup_time",
    "is_invariant",
    "extremal_internal_coupling",
    "russell_time",
    "tcn_time",
    "time_tolerance",
    "inf_terms",
    "sup_terms",
    "prune_terms",
    "time_report",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True, order=True)
class Term:
    """Sum ``T_pos + T_neg`` of one positive and one negative transport time.

    Either index may be ``None``; indices are absolute (1..n).
    """

    pos: Optional[int]
    neg: Optional[int]

    @property
    def label(self):
        parts = [f"T{k}" for k in (self.pos, self.neg) if k is not None]
        return "+".join(parts)

    def value(self, times):
        return sum(float(times[k - 1]) for k in (self.pos, self.neg) if k is not None)

    def dominated_by(self, other: "Term") -> bool:
        """True if ``self <= other`` for every admissible speed profile.

        Positive transport times decrease with the index and negative ones
        increase, so a smaller positive index or a larger negative index
        always gives a larger term.
        """
        if self.pos is not None and (other.pos is None or other.pos > self.pos):
            return False
        if self.neg is not None and (other.neg is None or other.neg < self.neg):
            return False
        return True


def prune_terms(terms):
    """Drop every term dominated by a different term, keeping first occurrences."""
    unique = list(dict.fromkeys(terms))
    return [t for t in unique if not any(o != t and t.dominated_by(o) for o in unique)]


def _form(profile: SpeedProfile, Q, cf=None) -> CanonicalForm:
    Q = np.asarray(Q, dtype=float) if not isinstance(Q, list) else Q
    shape = np.shape(Q)
    if len(shape) != 2 or shape != (profile.p, profile.m):
        raise DimensionMismatch(f"Q must be {profile.p}x{profile.m}, got {shape}")
    return cf if cf is not None else canonical_form(Q, rational=_is_exact(Q))


def _is_exact(Q):
    arr = np.asarray(Q, dtype=float)
    return bool(np.all(arr == np.round(arr)))


def inf_terms(m, p, pairs):
    terms = [Term(m + r, c) for r, c in pairs]
    return terms + [Term(m + 1, None), Term(None, m)]


def sup_terms(m, p, pairs, rho0):
    terms = [Term(m + k, pairs[k - 1][1]) for k in range(1, rho0 + 1)]
    # with rho0 = p the second argument degenerates to T_m alone
    terms.append(Term(m + rho0 + 1, m) if rho0 < p else Term(None, m))
    return terms


def inf_time(profile: SpeedProfile, Q, cf=None) -> float:
    """Smallest minimal control time over all internal couplings."""
    cf = _form(profile, Q, cf)
    times = profile.times
    return max(t.value(times) for t in inf_terms(profile.m, profile.p, cf.pairs))


def sup_time(profile: SpeedProfile, Q, cf=None) -> float:
    """Largest minimal control time over all internal couplings."""
    cf = _form(profile, Q, cf)
    times = profile.times
    return max(t.value(times) for t in sup_terms(profile.m, profile.p, cf.pairs, cf.rho0))


def is_invariant(profile: SpeedProfile, Q, cf=None) -> bool:
    """True when the minimal control time does not depend on the internal coupling."""
    cf = _form(profile, Q, cf)
    m, p, rho0 = profile.m, profile.p, cf.rho0
    if rho0 == p:
        return True
    if rho0 == 0:
        return False
    times = profile.times
    lead = max(Term(m + k, cf.pairs[k - 1][1]).value(times) for k in range(1, rho0 + 1))
    return lead >= Term(m + rho0 + 1, m).value(times)


def russell_time(profile: SpeedProfile) -> float:
    """``T_{m+1} + T_m``, the classical upper bound."""
    times = profile.times
    return float(times[profile.m] + times[profile.m - 1])


def tcn_time(profile: SpeedProfile) -> Optional[float]:
    """Comparison time for generic boundary matrices; ``None`` when ``m = 1``."""
    m, p = profile.m, profile.p
    if m < 2:
        return None
    times = profile.times
    pairs = [times[m + k - 1] + times[k - 1] for k in range(1, min(m, p) + 1)]
    if m >= p:
        pairs.append(times[m - 1])
    return float(max(pairs))


def time_tolerance(profile: SpeedProfile) -> float:
    return 1e-10 * russell_time(profile)


def extremal_internal_coupling(profile: SpeedProfile, Q, cf=None) -> MatrixField:
    """Internal coupling attaining the upper envelope :func:`sup_time`.

    Zero when the invariance criterion holds; otherwise only the entries
    ``(m+i, m)`` for ``i > rho0`` are nonzero.
    """
    cf = _form(profile, Q, cf)
    n, m, p = profile.n, profile.m, profile.p
    if is_invariant(profile, Q, cf):
        return MatrixField.zeros(n, n)
    Linv = np.array([[float(v) for v in row] for row in cf.Linv])
    col = cf.rho0  # 0-based index of column rho0 + 1
    rows = list(range(cf.rho0 + 1, p + 1))
    weights = np.array([Linv[i - 1, col] for i in rows])

    def sampler(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (n, n))
        lam_m = profile.speed(m, x)
        for i, w in zip(rows, weights):
            out[..., m + i - 1, m - 1] = (profile.speed(m + i, x) - lam_m) / (-lam_m) * w
        return out

    pw = all(s.is_constant for s in profile.speeds)
    if pw:
        return MatrixField.constant(sampler(np.array(0.5)))
    return MatrixField(sampler, (n, n))


@dataclass
class TimeReport:
    """Time envelope with comparison bounds and the audit of contributing terms."""

    inf_time: float
    sup_time: float
    russell_time: float
    tcn_time: Optional[float]
    invariant: bool
    contributing_terms: list = field(default_factory=list)

    def pruned(self, kind):
        """Labels of the ``kind`` ('inf' or 'sup') terms that survive dominance pruning."""
        return [e["label"] for e in self.contributing_terms if e["time"] == kind and e["dominant"]]

    def to_json(self, terms=True):
        out = {
            "schema_version": SCHEMA_VERSION,
            "inf_time": self.inf_time,
            "sup_time": self.sup_time,
            "russell_time": self.russell_time,
            "tcn_time": self.tcn_time,
            "invariant": self.invariant,
        }
        if terms:
            out["contributing_terms"] = self.contributing_terms
        return out

    @classmethod
    def from_json(cls, data):
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {data.get('schema_version')!r}")
        return cls(data["inf_time"], data["sup_time"], data["russell_time"], data["tcn_time"],
                   data["invariant"], list(data.get("contributing_terms", [])))


def _audit(kind, terms, times):
    values = [t.value(times) for t in terms]
    top = max(values)
    kept = set(prune_terms(terms))
    return [
        {
            "time": kind,
            "label": t.label,
            "pair": [t.pos, t.neg],
            "value": v,
            "attains": bool(v == top),
            "dominant": t in kept,
        }
        for t, v in zip(terms, values)
    ]


def time_report(profile: SpeedProfile, Q, cf=None) -> TimeReport:
    cf = _form(profile, Q, cf)
    times = profile.times
    m, p = profile.m, profile.p
    audit = _audit("inf", inf_terms(m, p, cf.pairs), times)
    audit += _audit("sup", sup_terms(m, p, cf.pairs, cf.rho0), times)
    return TimeReport(
        inf_time=inf_time(profile, Q, cf),
        sup_time=sup_time(profile, Q, cf),
        russell_time=russell_time(profile),
        tcn_time=tcn_time(profile),
        invariant=is_invariant(profile, Q, cf),
        contributing_terms=audit,
    )
