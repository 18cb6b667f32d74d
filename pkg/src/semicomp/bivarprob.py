"""Interval-level probabilities: the three submodels and the joint cells.

Given the marginal interval probabilities ``pi1``, ``pi2`` and the
within-interval odds ratio ``theta``, the probability that both events occur
in the interval is the admissible root of

    v (1 - pi1 - pi2 + v) = theta (pi1 - v) (pi2 - v).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import NumericalDomainError
from .model import ParameterVector

# Below this distance from 1 the odds ratio is treated as exactly 1.
EPS_THETA = 1e-9


def eval_pi1(params: ParameterVector, covariates: Mapping[str, float], k: int) -> float:
    lp = params.linear_predictor("pi1", covariates, k)
    return float(params.config.pi1.link.inverse(lp))


def eval_pi2(params: ParameterVector, covariates: Mapping[str, float], y1_prev: int, k: int) -> float:
    lp = params.linear_predictor("pi2", covariates, k, y1_prev)
    return float(params.config.pi2.link.inverse(lp))


def eval_theta(params: ParameterVector, covariates: Mapping[str, float], k: int) -> float:
    lp = params.linear_predictor("theta", covariates, k)
    return float(params.config.theta.link.inverse(lp))


def solve_pi12(pi1, pi2, theta):
    """Joint probability of both events from two margins and an odds ratio.

    Vectorized.  Uses the minus root of the quadratic, evaluated in whichever
    of two algebraically equal forms avoids cancellation: the rationalized
    form ``2 theta pi1 pi2 / (1 + a + s)`` when ``1 + a >= 0`` and the direct
    form ``(1 + a - s) / (2 (theta - 1))`` otherwise, where
    ``a = (pi1 + pi2)(theta - 1)`` and ``s`` is the square root of the
    discriminant.
    """
    p1, p2, th = np.broadcast_arrays(
        np.asarray(pi1, dtype=float), np.asarray(pi2, dtype=float), np.asarray(theta, dtype=float)
    )
    tm1 = th - 1.0
    indep = np.abs(tm1) < EPS_THETA
    # For theta > 1 divide the quadratic through by theta so that very
    # large odds ratios neither overflow nor lose the limit min(pi1, pi2).
    big = th > 1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        inv = np.where(big, 1.0 / th, 1.0)
        scale_t = np.where(big, 1.0, th)
        scale_m = np.where(big, 1.0 - inv, tm1)
        b = np.where(big, inv, 1.0) + (p1 + p2) * scale_m
        # for theta > 1 the scaled discriminant expands into nonnegative terms
        disc = np.where(
            big,
            inv * inv + 2.0 * inv * scale_m * (p1 + p2 - 2.0 * p1 * p2) + (scale_m * (p1 - p2)) ** 2,
            b * b - 4.0 * scale_t * scale_m * p1 * p2,
        )
    if np.any(~np.isfinite(disc)) or np.any(disc < -1e-12):
        raise NumericalDomainError("negative discriminant in joint probability")
    s = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        rationalized = 2.0 * scale_t * p1 * p2 / (b + s)
        direct = (b - s) / (2.0 * scale_m)
    out = np.where(b >= 0.0, rationalized, direct)
    out = np.where(indep, p1 * p2, out)
    # b + s == 0 only when pi1 * pi2 == 0
    out = np.where((p1 == 0.0) | (p2 == 0.0), 0.0, out)
    return out if out.ndim else float(out)


def pi12_partials(pi1, pi2, theta, pi12):
    """Partial derivatives of the joint probability w.r.t. (pi1, pi2, theta).

    Implicit differentiation of the odds-ratio equation.
    """
    p10 = pi1 - pi12
    p01 = pi2 - pi12
    p00 = 1.0 - pi1 - pi2 + pi12
    denom = p00 + pi12 + theta * (p10 + p01)
    d1 = (pi12 + theta * p01) / denom
    d2 = (pi12 + theta * p10) / denom
    dth = p10 * p01 / denom
    return d1, d2, dth


@dataclass(frozen=True)
class CellProbs:
    p00: float
    p10: float
    p01: float
    p11: float

    def as_tuple(self) -> tuple:
        return (self.p00, self.p10, self.p01, self.p11)

    def odds_ratio(self) -> float:
        return self.p11 * self.p00 / (self.p10 * self.p01)


def cell_probs_array(pi1, pi2, pi12):
    """Vectorized cells ``(p00, p10, p01, p11)`` without validation."""
    p10 = pi1 - pi12
    p01 = pi2 - pi12
    p00 = 1.0 - pi1 - pi2 + pi12
    return p00, p10, p01, pi12


def cell_probs(pi1: float, pi2: float, pi12: float) -> CellProbs:
    """The four outcome cells of an interval entered event-free."""
    cells = cell_probs_array(float(pi1), float(pi2), float(pi12))
    if min(cells) < -1e-12:
        raise NumericalDomainError(f"cell probability below zero: {cells}")
    return CellProbs(*cells)
