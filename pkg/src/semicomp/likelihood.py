"""Observed-data log-likelihood, difference penalty, scores and Hessian.

Each interval a subject contributes enters through one of six transition
cells.  From the event-free state the four joint cells of
``(pi1, pi2(0), theta)`` apply; after the non-terminal event only the
Bernoulli probability ``pi2(1)`` of the terminal event matters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .bivarprob import cell_probs_array, pi12_partials, solve_pi12
from .errors import ConfigurationError, NumericalDomainError
from .model import SUBMODELS, Y1_PREV, ModelConfig, ParameterVector, term_row
from .timegrid import SubjectPath

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class PenaltyWeights:
    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda_theta: float = 0.0

    def __post_init__(self):
        for v in self.as_tuple():
            if not np.isfinite(v) or v < 0:
                raise ConfigurationError("penalty weights must be finite and nonnegative")

    @classmethod
    def common(cls, lam: float) -> "PenaltyWeights":
        return cls(float(lam), float(lam), float(lam))

    def as_tuple(self) -> tuple:
        return (self.lambda1, self.lambda2, self.lambda_theta)

    def by_submodel(self) -> dict:
        return dict(zip(SUBMODELS, self.as_tuple()))

    def total(self) -> float:
        return sum(self.as_tuple())

    def for_config(self, config: ModelConfig) -> "PenaltyWeights":
        """Zero the weights of unstructured blocks (they carry no penalty)."""
        vals = [
            lam if config.sub(name).spline is not None else 0.0
            for name, lam in self.by_submodel().items()
        ]
        return PenaltyWeights(*vals)


@dataclass
class Dataset:
    """Interval-level arrays and design matrices for one cohort.

    Rows are interval observations ordered by subject.  ``designs[name]``
    holds baseline columns (rows of the basis) followed by covariate terms.
    """

    config: ModelConfig
    subject_ids: list
    subject: np.ndarray
    k: np.ndarray
    y1_prev: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    designs: dict
    n_empty: int = 0

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_obs(self) -> int:
        return len(self.k)

    @property
    def from_free(self) -> np.ndarray:
        """Mask of observations starting event-free."""
        return self.y1_prev == 0

    @property
    def subject_starts(self) -> np.ndarray:
        return np.flatnonzero(np.r_[True, self.subject[1:] != self.subject[:-1]])

    def subset(self, subjects: Sequence[int]) -> "Dataset":
        subjects = np.asarray(subjects)
        keep = np.isin(self.subject, subjects)
        remap = {s: i for i, s in enumerate(sorted(set(subjects.tolist())))}
        return Dataset(
            self.config,
            [self.subject_ids[s] for s in sorted(remap)],
            np.array([remap[s] for s in self.subject[keep]], dtype=int),
            self.k[keep],
            self.y1_prev[keep],
            self.y1[keep],
            self.y2[keep],
            {n: d[keep] for n, d in self.designs.items()},
        )


def build_dataset(paths: Sequence[SubjectPath], config: ModelConfig) -> Dataset:
    """Stack subject paths into design matrices; empty paths are skipped.

    Subjects are ordered by id so that sums over subjects, and hence every
    result, do not depend on the order of the input.
    """
    ids, subj, ks, y1p, y1, y2 = [], [], [], [], [], []
    rows = {name: [] for name in SUBMODELS}
    n_empty = 0
    paths = sorted(paths, key=lambda p: str(p.id))
    for a, b in zip(paths, paths[1:]):
        if str(a.id) == str(b.id):
            raise ConfigurationError(f"duplicate subject id {a.id!r}")
    for path in paths:
        if path.empty:
            n_empty += 1
            continue
        s = len(ids)
        ids.append(path.id)
        for ob in path.observations:
            if ob.y2_prev != 0:
                raise ConfigurationError(f"subject {path.id}: observation after the terminal event")
            if not 1 <= ob.k <= config.K:
                raise ConfigurationError(f"subject {path.id}: interval {ob.k} outside the partition")
            subj.append(s)
            ks.append(ob.k)
            y1p.append(ob.y1_prev)
            y1.append(ob.y1)
            y2.append(ob.y2)
            for name in SUBMODELS:
                try:
                    rows[name].append(term_row(config.sub(name).terms, ob.covariates, ob.y1_prev))
                except ConfigurationError as err:
                    raise ConfigurationError(f"subject {path.id}: {err}") from None
    if not ids:
        raise ConfigurationError("no subject contributes a full interval")
    k = np.asarray(ks, dtype=int)
    designs = {}
    for name in SUBMODELS:
        base = config.bases[name].T[k - 1]
        terms = np.asarray(rows[name], dtype=float).reshape(len(k), len(config.sub(name).terms))
        designs[name] = np.ascontiguousarray(np.hstack([base, terms]))
    return Dataset(
        config, ids, np.asarray(subj, dtype=int), k,
        np.asarray(y1p, dtype=int), np.asarray(y1, dtype=int), np.asarray(y2, dtype=int),
        designs, n_empty,
    )


def _phi(params) -> np.ndarray:
    return params.values if isinstance(params, ParameterVector) else np.asarray(params, dtype=float)


def _predictors(phi: np.ndarray, data: Dataset) -> dict:
    layout = data.config.layout
    return {name: data.designs[name] @ phi[layout[name][0]] for name in SUBMODELS}


def _interval_terms(phi: np.ndarray, data: Dataset, need_grad: bool):
    """Per-observation log contributions and, optionally, d/d(linear predictor)."""
    cfg = data.config
    lp = _predictors(phi, data)
    free = data.from_free
    n = data.n_obs
    floor_hits = 0

    p1 = np.clip(cfg.pi1.link.inverse(lp["pi1"]), 0.0, 1.0)
    p2 = np.clip(cfg.pi2.link.inverse(lp["pi2"]), 0.0, 1.0)
    th = np.maximum(cfg.theta.link.inverse(lp["theta"]), PROB_FLOOR)

    logc = np.empty(n)
    g = {name: np.zeros(n) for name in SUBMODELS} if need_grad else None

    # event-free start: four joint cells
    f = free
    a1, a2, at = p1[f], p2[f], th[f]
    v = np.clip(solve_pi12(a1, a2, at), 0.0, np.minimum(a1, a2))
    p00, p10, p01, p11 = cell_probs_array(a1, a2, v)
    y1, y2 = data.y1[f], data.y2[f]
    cell = np.select(
        [(y1 == 0) & (y2 == 0), (y1 == 1) & (y2 == 0), (y1 == 0) & (y2 == 1)],
        [p00, p10, p01],
        default=p11,
    )
    low = cell < PROB_FLOOR
    floor_hits += int(low.sum())
    cell = np.maximum(cell, PROB_FLOOR)
    logc[f] = np.log(cell)

    # after the non-terminal event: Bernoulli for the terminal event
    r = ~free
    b2, yy = p2[r], data.y2[r]
    bern = np.where(yy == 1, b2, 1.0 - b2)
    lowb = bern < PROB_FLOOR
    floor_hits += int(lowb.sum())
    logc[r] = np.log(np.maximum(bern, PROB_FLOOR))

    if need_grad:
        dv1, dv2, dvt = pi12_partials(a1, a2, at, v)
        # d log(cell) / d(pi1, pi2, theta) for each of the four cells
        d_p1 = np.select(
            [(y1 == 0) & (y2 == 0), (y1 == 1) & (y2 == 0), (y1 == 0) & (y2 == 1)],
            [dv1 - 1.0, 1.0 - dv1, -dv1], default=dv1,
        )
        d_p2 = np.select(
            [(y1 == 0) & (y2 == 0), (y1 == 1) & (y2 == 0), (y1 == 0) & (y2 == 1)],
            [dv2 - 1.0, -dv2, 1.0 - dv2], default=dv2,
        )
        d_th = np.select(
            [(y1 == 0) & (y2 == 0), (y1 == 1) & (y2 == 0), (y1 == 0) & (y2 == 1)],
            [dvt, -dvt, -dvt], default=dvt,
        )
        d_p1 = np.where(low, 0.0, d_p1 / cell)
        d_p2 = np.where(low, 0.0, d_p2 / cell)
        d_th = np.where(low, 0.0, d_th / cell)
        g["pi1"][f] = d_p1 * cfg.pi1.link.inverse_deriv(lp["pi1"][f])
        g["pi2"][f] = d_p2 * cfg.pi2.link.inverse_deriv(lp["pi2"][f])
        g["theta"][f] = d_th * cfg.theta.link.inverse_deriv(lp["theta"][f])

        db = np.where(yy == 1, 1.0, -1.0) / np.maximum(bern, PROB_FLOOR)
        db = np.where(lowb, 0.0, db)
        g["pi2"][r] = db * cfg.pi2.link.inverse_deriv(lp["pi2"][r])

    return logc, g, floor_hits


def interval_logliks(params, data: Dataset) -> np.ndarray:
    """Log contribution of every interval observation."""
    return _interval_terms(_phi(params), data, need_grad=False)[0]


def subject_logliks(params, data: Dataset) -> np.ndarray:
    """Per-subject log-likelihoods (length ``n_subjects``)."""
    logc = interval_logliks(params, data)
    return np.add.reduceat(logc, data.subject_starts)


def loglik(params, data: Dataset) -> float:
    return float(np.sum(interval_logliks(params, data)))


def subject_loglik(params, path: SubjectPath, config: ModelConfig) -> float:
    """Log-likelihood of a single discretized subject."""
    if path.empty:
        return 0.0
    return loglik(params, build_dataset([path], config))


def _check_lambdas(config: ModelConfig, lambdas: Optional[PenaltyWeights]) -> PenaltyWeights:
    lambdas = lambdas or PenaltyWeights()
    for name, lam in lambdas.by_submodel().items():
        if lam != 0.0 and config.sub(name).spline is None:
            raise ConfigurationError(f"{name}: nonzero penalty on an unstructured baseline")
    return lambdas


def penalty_value(phi: np.ndarray, config: ModelConfig, lambdas: PenaltyWeights) -> float:
    total = 0.0
    for name, lam in lambdas.by_submodel().items():
        P = config.penalties[name]
        if P is None or lam == 0.0:
            continue
        eta = phi[config.layout[name][1]]
        total += lam * float(eta @ P @ eta)
    return total


def penalty_gradient(phi: np.ndarray, config: ModelConfig, lambdas: PenaltyWeights) -> np.ndarray:
    """Gradient of the penalty term (to be subtracted from the score)."""
    out = np.zeros_like(phi)
    for name, lam in lambdas.by_submodel().items():
        P = config.penalties[name]
        if P is None or lam == 0.0:
            continue
        sl = config.layout[name][1]
        out[sl] = 2.0 * lam * (P @ phi[sl])
    return out


def penalty_hessian(config: ModelConfig, lambdas: PenaltyWeights) -> np.ndarray:
    """Hessian of the penalty term (block diagonal ``2 lambda P``)."""
    n = config.n_params
    out = np.zeros((n, n))
    for name, lam in lambdas.by_submodel().items():
        P = config.penalties[name]
        if P is None or lam == 0.0:
            continue
        sl = config.layout[name][1]
        out[sl, sl] = 2.0 * lam * P
    return out


def penalized_loglik(params, data: Dataset, lambdas: Optional[PenaltyWeights] = None) -> float:
    phi = _phi(params)
    lambdas = _check_lambdas(data.config, lambdas)
    return loglik(phi, data) - penalty_value(phi, data.config, lambdas)


def _obs_scores(phi: np.ndarray, data: Dataset):
    logc, g, hits = _interval_terms(phi, data, need_grad=True)
    cfg = data.config
    S = np.empty((data.n_obs, cfg.n_params))
    for name in SUBMODELS:
        S[:, cfg.layout[name][0]] = data.designs[name] * g[name][:, None]
    return logc, S, hits


def gradient(params, data: Dataset, lambdas: Optional[PenaltyWeights] = None) -> np.ndarray:
    """Analytic gradient of the penalized log-likelihood."""
    phi = _phi(params)
    lambdas = _check_lambdas(data.config, lambdas)
    logc, g, _ = _interval_terms(phi, data, need_grad=True)
    cfg = data.config
    out = np.empty(cfg.n_params)
    for name in SUBMODELS:
        out[cfg.layout[name][0]] = data.designs[name].T @ g[name]
    return out - penalty_gradient(phi, cfg, lambdas)


def value_and_gradient(params, data: Dataset, lambdas: Optional[PenaltyWeights] = None):
    phi = _phi(params)
    lambdas = _check_lambdas(data.config, lambdas)
    logc, g, _ = _interval_terms(phi, data, need_grad=True)
    cfg = data.config
    grad = np.empty(cfg.n_params)
    for name in SUBMODELS:
        grad[cfg.layout[name][0]] = data.designs[name].T @ g[name]
    val = float(np.sum(logc)) - penalty_value(phi, cfg, lambdas)
    return val, grad - penalty_gradient(phi, cfg, lambdas)


def fd_step(phi: np.ndarray) -> np.ndarray:
    return 1e-5 * np.maximum(1.0, np.abs(phi))


def hessian_unpenalized(params, data: Dataset) -> np.ndarray:
    """Central finite differences of the analytic (unpenalized) gradient."""
    phi = _phi(params).copy()
    h = fd_step(phi)
    P = phi.size
    H = np.empty((P, P))
    for j in range(P):
        up = phi.copy()
        dn = phi.copy()
        up[j] += h[j]
        dn[j] -= h[j]
        H[:, j] = (gradient(up, data) - gradient(dn, data)) / (2.0 * h[j])
    return 0.5 * (H + H.T)


@dataclass
class ScoreReport:
    """Log-likelihood, per-subject scores, gradient and Hessian at one point.

    ``per_subject_scores`` include a ``1/N`` share of the penalty gradient so
    that their column sums equal ``gradient``.  ``hessian`` is the Hessian of
    the penalized log-likelihood; ``hessian_unpenalized`` omits the penalty.
    """

    loglik: float
    penalized_loglik: float
    per_subject_scores: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    hessian_unpenalized: np.ndarray
    floor_hits: int = 0


def score_and_hessian(params, data: Dataset, lambdas: Optional[PenaltyWeights] = None) -> ScoreReport:
    phi = _phi(params)
    cfg = data.config
    lambdas = _check_lambdas(cfg, lambdas)
    logc, S, hits = _obs_scores(phi, data)
    U = np.add.reduceat(S, data.subject_starts, axis=0)
    pen_grad = penalty_gradient(phi, cfg, lambdas)
    U = U - pen_grad / data.n_subjects
    if not np.all(np.isfinite(U)):
        bad = np.flatnonzero(~np.all(np.isfinite(U), axis=1))[0]
        raise NumericalDomainError(f"non-finite score for subject {data.subject_ids[bad]}")
    grad = U.sum(axis=0)
    H0 = hessian_unpenalized(phi, data)
    if not np.all(np.isfinite(H0)):
        raise NumericalDomainError("non-finite Hessian entries")
    ll = float(np.sum(logc))
    return ScoreReport(
        loglik=ll,
        penalized_loglik=ll - penalty_value(phi, cfg, lambdas),
        per_subject_scores=U,
        gradient=grad,
        hessian=H0 - penalty_hessian(cfg, lambdas),
        hessian_unpenalized=H0,
        floor_hits=hits,
    )
