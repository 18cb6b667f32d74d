"""Cohort simulation from the discrete-time bivariate model.

Subjects are generated interval by interval: from the event-free state one
of the four joint cells is drawn, after the non-terminal event only the
terminal event is drawn.  Event and censoring times are reported at the
right end of the interval in which they occur.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .bivarprob import cell_probs_array, solve_pi12
from .errors import ConfigurationError
from .model import Y1_PREV, ModelConfig, ParameterVector, SubmodelSpec
from .splinebasis import SplineConfig
from .timegrid import Partition, SubjectRecord

COVARIATE_KINDS = ("bernoulli", "normal", "switch")
MAX_CENSORING = 0.3


@dataclass(frozen=True)
class CovariateSpec:
    """Generator for one covariate.

    ``bernoulli`` (``p``) and ``normal`` (``mean``, ``sd``) are fixed at
    entry.  ``switch`` is time-varying: a 0/1 indicator that turns on with
    probability ``p`` at the start of each interval and then stays on.
    """

    name: str
    kind: str = "bernoulli"
    p: float = 0.5
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise ConfigurationError(f"unknown covariate kind {self.kind!r}")
        if self.name == Y1_PREV:
            raise ConfigurationError(f"{Y1_PREV} is reserved")

    @property
    def time_varying(self) -> bool:
        return self.kind == "switch"


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to generate a cohort.

    ``censoring`` is ``None`` (administrative censoring at the end of the
    partition only) or a target proportion in ``[0, 0.3]`` of subjects
    randomly censored before the terminal event.  ``entry_probs`` is the
    distribution of the first contributed interval (left truncation).
    """

    truth: ParameterVector
    n_subjects: int
    covariates: tuple = ()
    censoring: Optional[float] = None
    entry_probs: Optional[tuple] = None
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ConfigurationError("n_subjects must be >= 1")
        if self.censoring is not None and not 0.0 <= self.censoring <= MAX_CENSORING:
            raise ConfigurationError(f"censoring target must lie in [0, {MAX_CENSORING}]")
        K = self.config.K
        if self.entry_probs is not None:
            p = np.asarray(self.entry_probs, dtype=float)
            if p.shape != (K,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
                raise ConfigurationError("entry_probs must be a distribution over the K intervals")
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate covariate names")
        missing = self.config.covariate_names() - set(names)
        if missing:
            raise ConfigurationError(f"model uses covariates with no generator: {sorted(missing)}")

    @property
    def config(self) -> ModelConfig:
        return self.truth.config

    def with_(self, **changes) -> "ScenarioSpec":
        from dataclasses import replace

        return replace(self, **changes)

    def manifest(self) -> dict:
        """Truth, design and seed, for checking recovery later."""
        cfg = self.config
        return {
            "scenario": self.name,
            "seed": int(self.seed),
            "n_subjects": int(self.n_subjects),
            "censoring_target": self.censoring,
            "entry_probs": list(self.entry_probs) if self.entry_probs is not None else None,
            "covariates": [
                {"name": c.name, "kind": c.kind, "p": c.p, "mean": c.mean, "sd": c.sd}
                for c in self.covariates
            ],
            "model": cfg.to_dict(),
            "truth": {
                "names": cfg.param_names,
                "values": self.truth.values.tolist(),
                "alpha": {n: self.truth.alpha(n).tolist() for n in ("pi1", "pi2", "theta")},
            },
            "note": "preset magnitudes are illustrative choices, not estimates from any dataset",
        }


def _draw_covariates(spec: ScenarioSpec, rng: np.random.Generator, n: int) -> dict:
    K = spec.config.K
    out = {}
    for c in spec.covariates:
        if c.kind == "bernoulli":
            out[c.name] = np.repeat((rng.random(n) < c.p).astype(float)[:, None], K, axis=1)
        elif c.kind == "normal":
            out[c.name] = np.repeat(rng.normal(c.mean, c.sd, n)[:, None], K, axis=1)
        else:
            flips = rng.random((n, K)) < c.p
            out[c.name] = np.maximum.accumulate(flips, axis=1).astype(float)
    return out


def _terms_matrix(sub: SubmodelSpec, cov: dict, k: int, rows: np.ndarray, y1_prev: np.ndarray) -> np.ndarray:
    X = np.ones((len(rows), len(sub.terms)))
    for j, term in enumerate(sub.terms):
        for factor in term:
            X[:, j] *= y1_prev if factor == Y1_PREV else cov[factor][rows, k - 1]
    return X


def _run(spec: ScenarioSpec, rng: np.random.Generator, n: int, hazard: float):
    """Generate paths; returns interval indices of entry, events and exit."""
    cfg = spec.config
    truth = spec.truth
    K = cfg.K
    entry_p = np.asarray(spec.entry_probs) if spec.entry_probs is not None else np.eye(K)[0]
    k_entry = rng.choice(np.arange(1, K + 1), size=n, p=entry_p)
    cov = _draw_covariates(spec, rng, n)
    # censoring happens at a cut-point after an observed interval
    if hazard > 0:
        cens_at = k_entry - 1 + rng.geometric(hazard, size=n)
    else:
        cens_at = np.full(n, K + 1)
    cens_at = np.where(cens_at >= K, K + 1, cens_at)

    alpha = {name: truth.alpha(name) for name in ("pi1", "pi2", "theta")}
    beta = {name: truth.slopes(name) for name in ("pi1", "pi2", "theta")}
    y1 = np.zeros(n, dtype=int)
    k1 = np.zeros(n, dtype=int)
    k2 = np.zeros(n, dtype=int)
    stop = np.zeros(n, dtype=int)  # last observed interval
    active = np.zeros(n, dtype=bool)

    for k in range(1, K + 1):
        active |= k_entry == k
        if not active.any():
            continue
        rows = np.flatnonzero(active)
        free = rows[y1[rows] == 0]
        ill = rows[y1[rows] == 1]

        if free.size:
            zeros = np.zeros(free.size)
            lp1 = alpha["pi1"][k - 1] + _terms_matrix(cfg.pi1, cov, k, free, zeros) @ beta["pi1"]
            lp2 = alpha["pi2"][k - 1] + _terms_matrix(cfg.pi2, cov, k, free, zeros) @ beta["pi2"]
            lpt = alpha["theta"][k - 1] + _terms_matrix(cfg.theta, cov, k, free, zeros) @ beta["theta"]
            p1 = cfg.pi1.link.inverse(lp1)
            p2 = cfg.pi2.link.inverse(lp2)
            th = cfg.theta.link.inverse(lpt)
            if np.any((p1 < 0) | (p1 > 1) | (p2 < 0) | (p2 > 1) | (th <= 0)):
                raise ConfigurationError(f"invalid truth: probabilities outside [0, 1] in interval {k}")
            cells = np.column_stack(cell_probs_array(p1, p2, solve_pi12(p1, p2, th)))
            if np.any(cells < -1e-12):
                raise ConfigurationError(f"invalid truth: negative cell probability in interval {k}")
            cum = np.cumsum(np.clip(cells, 0.0, None), axis=1)
            u = rng.random(free.size) * cum[:, -1]
            draw = (u[:, None] >= cum[:, :-1]).sum(axis=1)  # 0:00 1:10 2:01 3:11
            got1 = (draw == 1) | (draw == 3)
            got2 = (draw == 2) | (draw == 3)
            y1[free[got1]] = 1
            k1[free[got1]] = k
            k2[free[got2]] = k
        if ill.size:
            ones = np.ones(ill.size)
            lp2 = alpha["pi2"][k - 1] + _terms_matrix(cfg.pi2, cov, k, ill, ones) @ beta["pi2"]
            p2 = cfg.pi2.link.inverse(lp2)
            if np.any((p2 < 0) | (p2 > 1)):
                raise ConfigurationError(f"invalid truth: probabilities outside [0, 1] in interval {k}")
            died = rng.random(ill.size) < p2
            k2[ill[died]] = k

        stop[rows] = k
        dead = k2[rows] == k
        censored = cens_at[rows] == k
        active[rows[dead | censored]] = False

    return k_entry, k1, k2, stop, cens_at, cov


def _calibrate_hazard(spec: ScenarioSpec, target: float) -> float:
    """Per-cut-point censoring probability giving ``target`` expected censoring."""
    if target <= 0:
        return 0.0
    n_pilot = max(20000, spec.n_subjects)
    rng = np.random.default_rng([int(spec.seed), 0xCE5])
    k_entry, _, k2, stop, _, _ = _run(spec, rng, n_pilot, 0.0)
    K = spec.config.K
    end = np.where(k2 > 0, k2, K)
    exposures = end - k_entry  # cut-points at which censoring can strike
    ceiling = np.mean(exposures > 0)
    if target >= ceiling:
        raise ConfigurationError(f"censoring target {target} unreachable (max {ceiling:.3f})")

    def rate(h):
        return np.mean(1.0 - (1.0 - h) ** exposures)

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if rate(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def simulate_cohort(spec: ScenarioSpec, replicate: Optional[int] = None) -> list:
    """Generate ``spec.n_subjects`` SubjectRecords.

    Deterministic given ``spec.seed`` (and ``replicate``, which derives an
    independent stream per Monte-Carlo replicate).
    """
    hazard = _calibrate_hazard(spec, spec.censoring) if spec.censoring else 0.0
    seed = [int(spec.seed)] if replicate is None else [int(spec.seed), int(replicate)]
    rng = np.random.default_rng(seed)
    n = spec.n_subjects
    k_entry, k1, k2, stop, cens_at, cov = _run(spec, rng, n, hazard)
    cuts = spec.config.partition.cuts
    fixed = [c for c in spec.covariates if not c.time_varying]
    varying = [c for c in spec.covariates if c.time_varying]
    width = len(str(n))

    records = []
    for i in range(n):
        entry = cuts[k_entry[i] - 1]
        t2 = cuts[stop[i]]
        d2 = int(k2[i] > 0)
        if k1[i] > 0:
            t1, d1 = cuts[k1[i]], 1
        else:
            t1, d1 = t2, 0
        base = {c.name: float(cov[c.name][i, 0]) for c in fixed}
        tv = None
        if varying:
            tv = {
                k: {c.name: float(cov[c.name][i, k - 1]) for c in varying}
                for k in range(k_entry[i], stop[i] + 1)
            }
        records.append(SubjectRecord(f"s{i + 1:0{width}d}", entry, t1, d1, t2, d2, base, tv))
    return records


def censoring_proportion(records: Sequence[SubjectRecord], partition: Partition) -> float:
    """Share of subjects censored before the end of the partition."""
    end = partition.end
    return float(np.mean([r.d2 == 0 and r.t2_obs < end for r in records]))


PRESET_NAMES = ("null", "simple", "complex")


def preset_config(K: int = 10, width: float = 3.0, origin: float = 65.0, spline=None, complex_terms: bool = False) -> ModelConfig:
    """Model layout used by the presets (also the natural analysis model)."""
    terms = {
        "pi1": ["x1", "x2", "z"],
        "pi2": ["x1", "x2", "z", Y1_PREV],
        "theta": ["x1"],
    }
    if complex_terms:
        terms["pi2"] = terms["pi2"] + [f"{Y1_PREV}:x1"]
    return ModelConfig.build(Partition.regular(origin, width, K), terms=terms, spline=spline)


def scenario_presets(
    n_subjects: int = 2000,
    seed: int = 0,
    censoring: Optional[float] = 0.2,
    K: int = 10,
) -> dict:
    """The ``null``, ``simple`` and ``complex`` dependence scenarios.

    * null: theta = 1 everywhere and no effect of prior non-terminal status
    * simple: constant theta = 3 and odds ratio 2 for prior status
    * complex: decreasing, curved theta trend, covariate-dependent theta and
      an interaction of prior status with ``x1`` in the terminal model
    """
    t = np.linspace(0.0, 1.0, K)
    alpha1 = -3.0 + 1.4 * t
    alpha2 = -3.2 + 2.0 * t
    covs = (
        CovariateSpec("x1", "bernoulli", p=0.5),
        CovariateSpec("x2", "normal", mean=0.0, sd=1.0),
        CovariateSpec("z", "switch", p=0.05),
    )
    entry = np.r_[0.6, np.full(3, 0.4 / 3), np.zeros(K - 4)]
    slopes1 = {"x1": 0.4, "x2": -0.3, "z": 0.5}
    slopes2 = {"x1": -0.5, "x2": 0.3, "z": 0.4}

    out = {}
    cfg = preset_config(K)
    out["null"] = ScenarioSpec(
        ParameterVector.from_parts(
            cfg,
            {"pi1": alpha1, "pi2": alpha2, "theta": np.zeros(K)},
            {"pi1": slopes1, "pi2": {**slopes2, Y1_PREV: 0.0}, "theta": {"x1": 0.0}},
        ),
        n_subjects, covs, censoring, tuple(entry), seed, "null",
    )
    out["simple"] = ScenarioSpec(
        ParameterVector.from_parts(
            cfg,
            {"pi1": alpha1, "pi2": alpha2, "theta": np.full(K, np.log(3.0))},
            {"pi1": slopes1, "pi2": {**slopes2, Y1_PREV: np.log(2.0)}, "theta": {"x1": 0.0}},
        ),
        n_subjects, covs, censoring, tuple(entry), seed, "simple",
    )
    cfg_c = preset_config(K, complex_terms=True)
    alpha_theta = 0.3 + 1.5 * np.exp(-4.0 * t) - 0.8 * t**2
    out["complex"] = ScenarioSpec(
        ParameterVector.from_parts(
            cfg_c,
            {"pi1": alpha1, "pi2": alpha2, "theta": alpha_theta},
            {
                "pi1": slopes1,
                "pi2": {**slopes2, Y1_PREV: 0.7, f"{Y1_PREV}:x1": -0.4},
                "theta": {"x1": -0.5},
            },
        ),
        n_subjects, covs, censoring, tuple(entry), seed, "complex",
    )
    return out
