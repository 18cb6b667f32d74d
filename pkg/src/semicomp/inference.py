"""Sandwich variance, coefficient tables and pointwise curve bands."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigurationError, InferenceError, NumericalDomainError
from .likelihood import ScoreReport
from .model import SUBMODELS, Y1_PREV, term_row

Z95 = 1.959963984540054


def sandwich_covariance(report: ScoreReport) -> np.ndarray:
    """``H^{-1} (sum_i U_i U_i^T) H^{-1}`` with ``H`` the negative penalized Hessian.

    The diagonal holds squared standard errors of the estimates.
    """
    H = -np.asarray(report.hessian)
    U = np.asarray(report.per_subject_scores)
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise InferenceError("penalized Hessian is singular") from None
    if not np.all(np.isfinite(Hinv)) or np.linalg.cond(H) > 1e14:
        raise InferenceError("penalized Hessian is numerically singular")
    meat = U.T @ U
    V = Hinv @ meat @ Hinv
    V = 0.5 * (V + V.T)
    d = np.diag(V)
    if np.any(d < -1e-10):
        raise NumericalDomainError("negative variance on the covariance diagonal")
    return V


def model_based_covariance(report: ScoreReport) -> np.ndarray:
    """Inverse of the negative penalized Hessian (for comparison only)."""
    try:
        V = np.linalg.inv(-np.asarray(report.hessian))
    except np.linalg.LinAlgError:
        raise InferenceError("penalized Hessian is singular") from None
    return 0.5 * (V + V.T)


def coefficient_table(fit, covariance: Optional[np.ndarray] = None) -> list:
    """Wald summaries of the covariate slopes.

    Confidence limits are computed on the link scale and exponentiated for
    logit and log links (odds and rate ratios); ``exp`` is None otherwise.
    """
    cfg = fit.config
    V = fit.covariance if covariance is None else covariance
    phi = fit.params.values
    rows = []
    for name in SUBMODELS:
        sub = cfg.sub(name)
        sl = cfg.layout[name][2]
        for j, lab in zip(range(sl.start, sl.stop), sub.labels):
            est = float(phi[j])
            se = float(np.sqrt(max(V[j, j], 0.0)))
            lo, hi = est - Z95 * se, est + Z95 * se
            row = {"submodel": name, "term": lab, "name": f"{name}.{lab}",
                   "estimate": est, "se": se, "ci_low": lo, "ci_high": hi,
                   "exp": None, "exp_ci_low": None, "exp_ci_high": None}
            if sub.link.exponentiate:
                row.update(exp=float(np.exp(est)), exp_ci_low=float(np.exp(lo)),
                           exp_ci_high=float(np.exp(hi)))
            rows.append(row)
    return rows


def format_ratio(row: Mapping) -> str:
    """``"1.83 (1.43, 2.34)"`` style summary."""
    if row["exp"] is None:
        return f"{row['estimate']:.2f} ({row['ci_low']:.2f}, {row['ci_high']:.2f})"
    return f"{row['exp']:.2f} ({row['exp_ci_low']:.2f}, {row['exp_ci_high']:.2f})"


@dataclass(frozen=True)
class CurveEstimate:
    k: int
    estimate: float
    lower: float
    upper: float
    link_scale: float
    link_scale_se: float


def curve(
    params,
    covariance: np.ndarray,
    which: str,
    profile: Optional[Mapping[str, float]] = None,
) -> list:
    """Per-interval estimate and 95% pointwise band of one submodel.

    ``profile`` assigns covariate values (and ``y1_prev`` for ``pi2``);
    omitted covariates are zero.  The band is formed on the link scale
    from the covariance of the baseline and slope coefficients involved
    and mapped through the inverse link.
    """
    cfg = params.config
    if which not in SUBMODELS:
        raise ConfigurationError(f"unknown curve {which!r}; choose from {SUBMODELS}")
    sub = cfg.sub(which)
    profile = dict(profile or {})
    known = sub.covariate_names | cfg.covariate_names() | ({Y1_PREV} if which == "pi2" else set())
    unknown = set(profile) - known
    if unknown:
        raise ConfigurationError(f"unknown covariate(s) in profile: {sorted(unknown)}")
    y1_prev = int(profile.pop(Y1_PREV, 0))
    values = {n: float(profile.get(n, 0.0)) for n in sub.covariate_names}
    x = term_row(sub.terms, values, y1_prev)

    block, base_sl, slope_sl = cfg.layout[which]
    B = cfg.bases[which]
    phi = params.values
    V = covariance[block, block]
    out = []
    for k in range(1, cfg.K + 1):
        c = np.concatenate([B[:, k - 1], x])
        lp = float(c @ phi[block])
        se = float(np.sqrt(max(c @ V @ c, 0.0)))
        lo, hi = lp - Z95 * se, lp + Z95 * se
        inv = sub.link.inverse
        est_r, lo_r, hi_r = float(inv(lp)), float(inv(lo)), float(inv(hi))
        out.append(CurveEstimate(k, est_r, min(lo_r, hi_r), max(lo_r, hi_r), lp, se))
    return out


def baseline_curves(fit, which: str, covariance: Optional[np.ndarray] = None) -> list:
    """Reference-profile curve (all covariates zero)."""
    V = fit.covariance if covariance is None else covariance
    return curve(fit.params, V, which)
