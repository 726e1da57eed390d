"""Matrix-valued functions of the space variable ``x`` in [0, 1]."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, DomainError

__all__ = ["MatrixField"]


class MatrixField:
    """Callable ``x -> A(x)`` returning an array of shape ``x.shape + (rows, cols)``.

    Use :meth:`constant` or :meth:`piecewise_constant` for file-backed data;
    the generic constructor wraps any vectorized sampler (used for fields
    produced by coordinate changes).
    """

    def __init__(self, sampler, shape, *, zero=False, breaks=None, values=None):
        self._sampler = sampler
        self.shape = tuple(int(s) for s in shape)
        self.zero = bool(zero)
        self.breaks = breaks
        self.values = values

    @classmethod
    def zeros(cls, rows, cols):
        shape = (rows, cols)
        return cls(lambda x: np.zeros(np.shape(x) + shape), shape, zero=True,
                   breaks=np.array([0.0, 1.0]), values=np.zeros((1,) + shape))

    @classmethod
    def constant(cls, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls.piecewise_constant([0.0, 1.0], [A])

    @classmethod
    def piecewise_constant(cls, breaks, values):
        """Field equal to ``values[j]`` on ``[breaks[j], breaks[j+1])``.

        The last piece is closed at ``x = 1``.
        """
        breaks = np.asarray(breaks, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim != 3:
            raise DimensionMismatch("piecewise values must be a list of matrices")
        if len(breaks) != len(values) + 1:
            raise DimensionMismatch("need exactly one more break than pieces")
        if breaks[0] != 0.0 or breaks[-1] != 1.0 or np.any(np.diff(breaks) <= 0):
            raise DomainError("breaks must increase strictly from 0 to 1")
        inner = breaks[1:-1]

        def sampler(x):
            j = np.searchsorted(inner, np.asarray(x, dtype=float), side="right")
            return values[j]

        return cls(sampler, values.shape[1:], zero=not np.any(values),
                   breaks=breaks, values=values)

    @property
    def is_piecewise_constant(self):
        return self.values is not None

    def __call__(self, x):
        return self._sampler(np.asarray(x, dtype=float))

    def diagonal_is_zero(self):
        if self.zero:
            return True
        if self.values is not None:
            return not np.any(np.diagonal(self.values, axis1=1, axis2=2))
        probe = self(np.linspace(0.0, 1.0, 257))
        return not np.any(np.diagonal(probe, axis1=1, axis2=2))

    def to_json(self):
        if self.values is None:
            raise ValueError("only piecewise-constant fields are serializable")
        return {"breaks": self.breaks.tolist(), "values": self.values.tolist()}
