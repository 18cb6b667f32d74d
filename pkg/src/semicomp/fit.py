"""Penalized maximum likelihood and AIC-based choice of the penalty."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import (
    ConfigurationError,
    InferenceError,
    InitializationError,
    NumericalDomainError,
    SemiCompError,
)
from .likelihood import (
    Dataset,
    PenaltyWeights,
    ScoreReport,
    _check_lambdas,
    penalized_loglik,
    score_and_hessian,
    value_and_gradient,
)
from .model import SUBMODELS, ParameterVector
from .splinebasis import fit_coefficients

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.0, 0.1, 0.5, 1.0, 2.5, 5.0)
MAX_ITER = 500
BOUNDARY_LP = 12.0


@dataclass
class FitResult:
    params: ParameterVector
    loglik_unpenalized: float
    penalized_loglik: float
    aic: float
    edf: float
    lambdas: PenaltyWeights
    covariance: np.ndarray
    convergence: dict
    warnings: dict = field(default_factory=dict)
    score: Optional[ScoreReport] = None
    n_subjects: int = 0
    n_obs: int = 0

    @property
    def config(self):
        return self.params.config

    @property
    def converged(self) -> bool:
        return self.convergence["status"] == "converged"

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def effective_df(hessian_unpenalized: np.ndarray, hessian_penalized: np.ndarray) -> float:
    """``trace(H(phi; 0) H(phi; lambda)^{-1})``."""
    try:
        X = np.linalg.solve(hessian_penalized, hessian_unpenalized)
    except np.linalg.LinAlgError:
        raise InferenceError(
            "penalized Hessian is singular; use a larger penalty or a coarser partition"
        ) from None
    if np.linalg.cond(hessian_penalized) > 1e14:
        raise InferenceError(
            "penalized Hessian is numerically singular; use a larger penalty or a coarser partition"
        )
    return float(np.trace(X))


def check_design(data: Dataset) -> None:
    """Reject constant or collinear covariate columns.

    Columns are checked over the observations that inform each submodel
    (event-free starts for pi1 and theta, all observations for pi2),
    together with an implicit intercept standing in for the baseline.
    """
    cfg = data.config
    for name in SUBMODELS:
        sub = cfg.sub(name)
        if not sub.terms:
            continue
        rows = slice(None) if name == "pi2" else data.from_free
        X = data.designs[name][rows][:, cfg.layout[name][2].start - cfg.layout[name][0].start:]
        labels = sub.labels
        if X.shape[0] == 0:
            raise ConfigurationError(f"{name}: no observations inform this submodel")
        for j, lab in enumerate(labels):
            if np.ptp(X[:, j]) == 0.0:
                raise ConfigurationError(f"{name}: column {lab!r} has zero variance")
        scale = X.std(axis=0)
        Z = np.column_stack([np.ones(X.shape[0]), (X - X.mean(axis=0)) / scale])
        if np.linalg.matrix_rank(Z) < Z.shape[1]:
            kept = [0]
            for j in range(1, Z.shape[1]):
                if np.linalg.matrix_rank(Z[:, kept + [j]]) == len(kept) + 1:
                    kept.append(j)
                else:
                    # columns spanning the dependent one
                    coef, *_ = np.linalg.lstsq(Z[:, kept], Z[:, j], rcond=None)
                    partners = [labels[c - 1] for c, b in zip(kept, coef) if c > 0 and abs(b) > 1e-8]
                    raise ConfigurationError(
                        f"{name}: column {labels[j - 1]!r} is collinear with {partners or ['the baseline']}"
                    )


def initial_params(data: Dataset) -> ParameterVector:
    """Baselines from pooled per-interval event frequencies, slopes zero."""
    cfg = data.config
    K = cfg.K
    free = data.from_free
    phi = np.zeros(cfg.n_params)
    n_free = np.bincount(data.k[free], minlength=K + 1)[1:]
    e1 = np.bincount(data.k[free], weights=data.y1[free], minlength=K + 1)[1:]
    n_all = np.bincount(data.k, minlength=K + 1)[1:]
    e2 = np.bincount(data.k, weights=data.y2, minlength=K + 1)[1:]
    targets = {
        "pi1": cfg.pi1.link.link((e1 + 0.5) / (n_free + 1.0)),
        "pi2": cfg.pi2.link.link((e2 + 0.5) / (n_all + 1.0)),
    }
    for name in ("pi1", "pi2"):
        sl = cfg.layout[name][1]
        phi[sl] = fit_coefficients(cfg.bases[name], targets[name])
    return ParameterVector(cfg, phi)


def _grad_tol(value: float) -> float:
    return 1e-6 * max(1.0, abs(value))


def maximize(
    data: Dataset,
    lambdas: Optional[PenaltyWeights] = None,
    init: Optional[ParameterVector] = None,
    max_iter: int = MAX_ITER,
    check: bool = True,
) -> FitResult:
    """Maximize the penalized log-likelihood.

    Runs L-BFGS on the scaled negative objective, then polishes with
    Newton steps on the finite-difference Hessian until the gradient norm
    is below ``1e-6 * max(1, |loglik|)``.  On failure the best iterate is
    returned with the status recorded.
    """
    cfg = data.config
    lambdas = _check_lambdas(cfg, lambdas)
    if check:
        check_design(data)
    phi0 = (init.values if init is not None else initial_params(data).values).copy()
    f0, g0 = value_and_gradient(phi0, data, lambdas)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise InitializationError("objective is not finite at the initial value")

    scale = float(data.n_obs)
    iterations = 0
    status = "converged"
    phi = phi0
    if np.linalg.norm(g0) >= _grad_tol(f0):

        best = {"f": np.inf, "x": phi0}

        def fun(x):
            try:
                v, g = value_and_gradient(x, data, lambdas)
            except NumericalDomainError:
                # outside the admissible region: let the line search back off
                return np.inf, np.zeros_like(x)
            f = -v / scale
            if np.isfinite(f) and f < best["f"]:
                best["f"], best["x"] = f, x.copy()
            return f, -g / scale

        res = optimize.minimize(
            fun, phi0, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "maxcor": 20, "gtol": 1e-9, "ftol": 1e-15},
        )
        # the reported point can be a rejected trial when the search stalls
        phi = res.x if np.isfinite(res.fun) and res.fun <= best["f"] else best["x"]
        iterations = int(res.nit)
        phi, newton_iter, status = _newton_polish(phi, data, lambdas)
        iterations += newton_iter

    report = score_and_hessian(phi, data, lambdas)
    gnorm = float(np.linalg.norm(report.gradient))
    if status == "converged" and gnorm >= _grad_tol(report.penalized_loglik):
        status = "max_iter"

    warnings = {}
    if report.floor_hits:
        warnings["probability_floor"] = report.floor_hits
    boundary = _boundary_flags(ParameterVector(cfg, phi))
    if boundary:
        warnings["boundary"] = boundary

    try:
        edf = effective_df(report.hessian_unpenalized, report.hessian)
    except InferenceError as err:
        warnings["edf"] = str(err)
        edf = float("nan")
    from .inference import sandwich_covariance

    try:
        cov = sandwich_covariance(report)
    except SemiCompError as err:
        warnings["covariance"] = str(err)
        cov = np.full((cfg.n_params, cfg.n_params), np.nan)

    return FitResult(
        params=ParameterVector(cfg, phi),
        loglik_unpenalized=report.loglik,
        penalized_loglik=report.penalized_loglik,
        aic=-2.0 * report.loglik + 2.0 * edf,
        edf=edf,
        lambdas=lambdas,
        covariance=cov,
        convergence={"iterations": iterations, "gradient_norm": gnorm, "status": status},
        warnings=warnings,
        score=report,
        n_subjects=data.n_subjects,
        n_obs=data.n_obs,
    )


def _newton_polish(phi, data, lambdas, max_steps=50):
    """Damped Newton with backtracking; returns (phi, steps, status)."""
    steps = 0
    f, g = value_and_gradient(phi, data, lambdas)
    while np.linalg.norm(g) >= _grad_tol(f):
        if steps >= max_steps:
            return phi, steps, "max_iter"
        rep = score_and_hessian(phi, data, lambdas)
        H = rep.hessian
        try:
            direction = np.linalg.solve(-H, g)
        except np.linalg.LinAlgError:
            direction = g
        if direction @ g <= 0:  # not an ascent direction
            direction = g / max(1.0, np.linalg.norm(g))
        t = 1.0
        while t > 1e-10:
            cand = phi + t * direction
            try:
                fc, gc = value_and_gradient(cand, data, lambdas)
            except NumericalDomainError:
                fc = -np.inf
            if np.isfinite(fc) and fc >= f - 1e-12 * abs(f):
                break
            t *= 0.5
        else:
            return phi, steps, "line_search_failure"
        phi, f, g = cand, fc, gc
        steps += 1
    return phi, steps, "converged"


def _boundary_flags(params: ParameterVector) -> list:
    cfg = params.config
    flags = []
    for name in SUBMODELS:
        alpha = params.alpha(name)
        for k in np.flatnonzero(np.abs(alpha) > BOUNDARY_LP):
            flags.append(f"{name}[{k + 1}]")
    return flags


def lambda_grid(values: Sequence[float] = DEFAULT_LAMBDAS) -> list:
    """Common penalty applied to the three baselines, for each value."""
    if len(values) == 0:
        raise ConfigurationError("penalty grid is empty")
    return [PenaltyWeights.common(v) for v in values]


def select_lambda(
    data: Dataset,
    grid: Optional[Sequence[PenaltyWeights]] = None,
    init: Optional[ParameterVector] = None,
    warm_start: bool = True,
):
    """Fit every grid point and return the AIC minimizer and the AIC table.

    Penalties on unstructured baselines are dropped.  Grid points are
    visited in ascending order of total penalty, warm-starting each fit from
    the previous converged one when that scores better than the default
    start; a warm start that fails to converge is retried cold.  Ties in AIC go to the larger penalty, and
    fits that did not converge are only chosen when none converged.
    """
    cfg = data.config
    grid = list(grid) if grid is not None else lambda_grid()
    if not grid:
        raise ConfigurationError("penalty grid is empty")
    grid = [lam.for_config(cfg) for lam in grid]
    order = sorted(range(len(grid)), key=lambda i: (grid[i].total(), grid[i].as_tuple()))
    check_design(data)

    fits = {}
    failures = {}
    cold = init if init is not None else initial_params(data)
    prev = None
    for i in order:
        lam = grid[i]
        start = cold
        # an unpenalized optimum can carry huge spline coefficients, so only
        # warm-start when that is the better point under the new penalty
        if prev is not None and penalized_loglik(prev, data, lam) > penalized_loglik(cold, data, lam):
            start = prev
        try:
            fit = maximize(data, lam, init=start, check=False)
            if not fit.converged and start is not cold:
                retry = maximize(data, lam, init=cold, check=False)
                if retry.penalized_loglik > fit.penalized_loglik:
                    fit = retry
        except SemiCompError as err:
            failures[i] = str(err)
            logger.warning("fit at lambda=%s failed: %s", lam.as_tuple(), err)
            continue
        fits[i] = fit
        if warm_start and fit.converged:
            prev = fit.params

    if not fits:
        raise SemiCompError(
            "all fits failed: " + "; ".join(f"{grid[i].as_tuple()}: {m}" for i, m in failures.items())
        )

    table = []
    for i in order:
        lam = grid[i]
        if i in fits:
            f = fits[i]
            table.append({
                "lambda": list(lam.as_tuple()),
                "aic": f.aic,
                "edf": f.edf,
                "loglik": f.loglik_unpenalized,
                "status": f.convergence["status"],
            })
        else:
            table.append({"lambda": list(lam.as_tuple()), "aic": None, "edf": None,
                          "loglik": None, "status": f"failed: {failures[i]}"})

    # fits without an AIC are skipped; unconverged ones compete only when nothing converged
    usable = [i for i in order if i in fits and np.isfinite(fits[i].aic)]
    eligible = [i for i in usable if fits[i].converged] or usable
    if not eligible:
        raise InferenceError("no fit on the grid has a finite AIC: " + "; ".join(
            f"{grid[i].as_tuple()}: {fits[i].warnings.get('edf', 'unknown')}" for i in fits))
    best = None
    for i in eligible:
        if best is None:
            best = i
            continue
        a, b = fits[i].aic, fits[best].aic
        tie = abs(a - b) <= 1e-9 * max(1.0, abs(b))
        if a < b and not tie:
            best = i
        elif tie and grid[i].total() >= grid[best].total():
            best = i
    return fits[best], table
