"""B-spline bases on the partition grid and difference penalties."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .timegrid import Partition


@dataclass(frozen=True)
class SplineConfig:
    """Spline specification for one baseline trend.

    ``num_knots`` counts the boundary knots, so the basis has
    ``num_knots - 1 + degree`` functions.  ``knots`` optionally overrides
    the default equally spaced placement on ``[tau_0, tau_K]``; its first
    and last entries act as the boundary knots.
    """

    num_knots: int
    degree: int = 3
    penalty_order: int = 2
    knots: Optional[tuple] = None

    def __post_init__(self):
        if self.knots is not None:
            knots = tuple(float(t) for t in self.knots)
            object.__setattr__(self, "knots", knots)
            if len(knots) != self.num_knots:
                raise ConfigurationError("explicit knots must have num_knots entries")
            if any(b <= a for a, b in zip(knots, knots[1:])):
                raise ConfigurationError("explicit knots must be strictly increasing")
        if self.num_knots < 2:
            raise ConfigurationError("need at least the two boundary knots (J >= 2)")
        if self.degree < 1:
            raise ConfigurationError("spline degree must be >= 1")
        if not 1 <= self.penalty_order < self.n_basis:
            raise ConfigurationError(
                f"penalty order must satisfy 1 <= m < {self.n_basis}, got {self.penalty_order}"
            )

    @property
    def n_basis(self) -> int:
        return self.num_knots - 1 + self.degree

    def knot_vector(self, partition: Partition) -> np.ndarray:
        """Full knot vector with boundary knots repeated ``degree`` extra times."""
        if self.knots is not None:
            inner = np.asarray(self.knots)
        else:
            inner = np.linspace(partition.origin, partition.end, self.num_knots)
        q = self.degree
        return np.concatenate([np.repeat(inner[0], q), inner, np.repeat(inner[-1], q)])


def bspline_values(x: np.ndarray, knots: np.ndarray, degree: int) -> np.ndarray:
    """Evaluate all B-splines of ``degree`` on ``knots`` at points ``x``.

    Cox-de Boor recursion.  Returns an array of shape ``(n_basis, len(x))``.
    Points equal to the last knot are assigned to the final non-empty span
    so the basis stays a partition of unity on the closed range.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.asarray(knots, dtype=float)
    n_spans = len(t) - 1
    lo, hi = t[degree], t[-degree - 1]
    if np.any(x < lo - 1e-12 * max(1.0, abs(lo))) or np.any(x > hi + 1e-12 * max(1.0, abs(hi))):
        raise ConfigurationError("evaluation points outside the knot range")

    # degree-0 indicators on half-open spans [t_i, t_{i+1})
    B = np.zeros((n_spans, len(x)))
    last = max(i for i in range(n_spans) if t[i] < t[i + 1])
    for i in range(n_spans):
        if t[i] < t[i + 1]:
            B[i] = (x >= t[i]) & (x < t[i + 1])
    B[last, x >= t[last + 1]] = 1.0
    B[:last, x >= t[last + 1]] = 0.0

    for p in range(1, degree + 1):
        nxt = np.zeros((n_spans - p, len(x)))
        for i in range(n_spans - p):
            d1 = t[i + p] - t[i]
            d2 = t[i + p + 1] - t[i + 1]
            if d1 > 0:
                nxt[i] += (x - t[i]) / d1 * B[i]
            if d2 > 0:
                nxt[i] += (t[i + p + 1] - x) / d2 * B[i + 1]
        B = nxt
    return B


def build_basis(partition: Partition, cfg: SplineConfig) -> np.ndarray:
    """``n_basis x K`` matrix of basis values at ``tau_1, ..., tau_K``."""
    if cfg.n_basis > partition.K:
        raise ConfigurationError(
            f"more spline terms than intervals ({cfg.n_basis} > {partition.K})"
        )
    grid = np.asarray(partition.cuts[1:])
    return bspline_values(grid, cfg.knot_vector(partition), cfg.degree)


def difference_matrix(n: int, m: int) -> np.ndarray:
    """The ``(n - m) x n`` matrix of the m-th order difference operator."""
    return np.diff(np.eye(n), n=m, axis=0)


def build_penalty(n_basis: int, m: int) -> np.ndarray:
    """``D_m^T D_m`` for the m-th order difference operator."""
    if not 1 <= m < n_basis:
        raise ConfigurationError(f"penalty order must satisfy 1 <= m < {n_basis}, got {m}")
    D = difference_matrix(n_basis, m)
    return D.T @ D


def fit_coefficients(basis: np.ndarray, alpha: Sequence[float]) -> np.ndarray:
    """Least-squares spline coefficients reproducing ``alpha`` on the grid."""
    coef, *_ = np.linalg.lstsq(np.asarray(basis).T, np.asarray(alpha, dtype=float), rcond=None)
    return coef
