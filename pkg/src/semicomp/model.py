"""Model configuration and the flat parameter layout.

The model has three submodels, each with a baseline time trend on the
partition and a linear covariate term:

* ``pi1``   P(non-terminal event in interval k | event-free at tau_{k-1})
* ``pi2``   P(terminal event in interval k | alive at tau_{k-1}); may use the
  pseudo-covariate ``y1_prev`` (non-terminal status at tau_{k-1})
* ``theta`` odds ratio of the two events within interval k

The parameter vector stacks, per submodel, the baseline coefficients
(``alpha`` per interval, or B-spline ``eta``) followed by the slopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .links import Link, get_link
from .splinebasis import SplineConfig, build_basis, build_penalty
from .timegrid import Partition

SUBMODELS = ("pi1", "pi2", "theta")
Y1_PREV = "y1_prev"
DEFAULT_LINKS = {"pi1": "logit", "pi2": "logit", "theta": "log"}


def parse_term(term) -> tuple:
    """``"a:b"`` or ``("a", "b")`` -> ``("a", "b")``."""
    if isinstance(term, str):
        parts = tuple(p.strip() for p in term.split(":"))
    else:
        parts = tuple(str(p).strip() for p in term)
    if not parts or any(not p for p in parts):
        raise ConfigurationError(f"malformed term {term!r}")
    if len(set(parts)) != len(parts):
        raise ConfigurationError(f"term {term!r} repeats a factor")
    return parts


def term_label(term: tuple) -> str:
    return ":".join(term)


@dataclass(frozen=True)
class SubmodelSpec:
    """Link, covariate terms and baseline structure of one submodel.

    ``spline=None`` gives the unstructured baseline (one parameter per
    interval).
    """

    link: Link = field(default_factory=lambda: get_link("logit"))
    terms: tuple = ()
    spline: Optional[SplineConfig] = None

    def __post_init__(self):
        object.__setattr__(self, "link", get_link(self.link))
        terms = tuple(parse_term(t) for t in self.terms)
        if len(set(terms)) != len(terms):
            raise ConfigurationError("duplicate terms in a submodel")
        object.__setattr__(self, "terms", terms)

    @property
    def labels(self) -> list:
        return [term_label(t) for t in self.terms]

    @property
    def covariate_names(self) -> set:
        return {name for t in self.terms for name in t if name != Y1_PREV}


@dataclass(frozen=True)
class ModelConfig:
    partition: Partition
    pi1: SubmodelSpec = field(default_factory=SubmodelSpec)
    pi2: SubmodelSpec = field(default_factory=SubmodelSpec)
    theta: SubmodelSpec = field(default_factory=lambda: SubmodelSpec(link="log"))

    def __post_init__(self):
        for name in ("pi1", "theta"):
            if any(Y1_PREV in t for t in self.sub(name).terms):
                raise ConfigurationError(f"{Y1_PREV} terms may only appear in the pi2 submodel")
        for name in SUBMODELS:
            cfg = self.sub(name).spline
            if cfg is not None and cfg.n_basis > self.partition.K:
                raise ConfigurationError(
                    f"{name}: more spline terms than intervals "
                    f"({cfg.n_basis} > {self.partition.K})"
                )

    @classmethod
    def build(
        cls,
        partition: Partition,
        terms: Optional[Mapping[str, Sequence]] = None,
        links: Optional[Mapping[str, str]] = None,
        spline=None,
    ) -> "ModelConfig":
        """Convenience constructor.

        ``spline`` is either a single SplineConfig applied to all three
        baselines, or a mapping from submodel name to SplineConfig/None.
        """
        terms = dict(terms or {})
        links = {**DEFAULT_LINKS, **(links or {})}
        if spline is None or isinstance(spline, SplineConfig):
            spline = {name: spline for name in SUBMODELS}
        subs = {
            name: SubmodelSpec(links[name], tuple(terms.get(name, ())), spline.get(name))
            for name in SUBMODELS
        }
        return cls(partition, **subs)

    def sub(self, name: str) -> SubmodelSpec:
        if name not in SUBMODELS:
            raise ConfigurationError(f"unknown submodel {name!r}")
        return getattr(self, name)

    @property
    def K(self) -> int:
        return self.partition.K

    @cached_property
    def bases(self) -> dict:
        """Per submodel, the ``n_base x K`` map from baseline coefficients to alpha."""
        out = {}
        for name in SUBMODELS:
            cfg = self.sub(name).spline
            out[name] = np.eye(self.K) if cfg is None else build_basis(self.partition, cfg)
        return out

    @cached_property
    def penalties(self) -> dict:
        """Per submodel, the difference penalty matrix or None if unstructured."""
        out = {}
        for name in SUBMODELS:
            cfg = self.sub(name).spline
            out[name] = None if cfg is None else build_penalty(cfg.n_basis, cfg.penalty_order)
        return out

    @cached_property
    def layout(self) -> dict:
        """Per submodel: (block slice, baseline slice, slope slice) into phi."""
        out = {}
        start = 0
        for name in SUBMODELS:
            nb = self.bases[name].shape[0]
            ns = len(self.sub(name).terms)
            out[name] = (
                slice(start, start + nb + ns),
                slice(start, start + nb),
                slice(start + nb, start + nb + ns),
            )
            start += nb + ns
        return out

    @property
    def n_params(self) -> int:
        return self.layout["theta"][0].stop

    @cached_property
    def param_names(self) -> list:
        names = []
        for name in SUBMODELS:
            base = "alpha" if self.sub(name).spline is None else "eta"
            nb = self.bases[name].shape[0]
            names += [f"{name}.{base}[{j + 1}]" for j in range(nb)]
            names += [f"{name}.{lab}" for lab in self.sub(name).labels]
        return names

    def slope_index(self) -> list:
        """Flat indices of all covariate slopes, in layout order."""
        idx = []
        for name in SUBMODELS:
            sl = self.layout[name][2]
            idx += list(range(sl.start, sl.stop))
        return idx

    def covariate_names(self) -> set:
        out = set()
        for name in SUBMODELS:
            out |= self.sub(name).covariate_names
        return out

    def to_dict(self) -> dict:
        """JSON-ready description (round-trips through :func:`config_from_dict`)."""
        subs = {}
        for name in SUBMODELS:
            s = self.sub(name)
            spline = None
            if s.spline is not None:
                spline = {
                    "num_knots": s.spline.num_knots,
                    "degree": s.spline.degree,
                    "penalty_order": s.spline.penalty_order,
                    "knots": list(s.spline.knots) if s.spline.knots is not None else None,
                }
            subs[name] = {"link": s.link.name, "terms": s.labels, "spline": spline}
        return {"cuts": list(self.partition.cuts), "submodels": subs}


def config_from_dict(d: Mapping) -> ModelConfig:
    partition = Partition(tuple(d["cuts"]))
    subs = {}
    for name in SUBMODELS:
        s = d["submodels"][name]
        spline = s.get("spline")
        if spline is not None:
            knots = spline.get("knots")
            spline = SplineConfig(
                int(spline["num_knots"]),
                int(spline.get("degree", 3)),
                int(spline.get("penalty_order", 2)),
                tuple(knots) if knots is not None else None,
            )
        subs[name] = SubmodelSpec(s.get("link", DEFAULT_LINKS[name]), tuple(s.get("terms", ())), spline)
    return ModelConfig(partition, **subs)


def term_row(terms: Sequence[tuple], covariates: Mapping[str, float], y1_prev: int = 0) -> np.ndarray:
    """Values of the product terms for one covariate profile."""
    row = np.empty(len(terms))
    for j, term in enumerate(terms):
        v = 1.0
        for factor in term:
            if factor == Y1_PREV:
                v *= y1_prev
            else:
                try:
                    v *= float(covariates[factor])
                except KeyError:
                    raise ConfigurationError(f"unknown covariate {factor!r}") from None
        row[j] = v
    return row


@dataclass
class ParameterVector:
    """Flat parameter vector ``phi`` bound to its model configuration."""

    config: ModelConfig
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.shape != (self.config.n_params,):
            raise ConfigurationError(
                f"parameter vector has length {self.values.size}, "
                f"model needs {self.config.n_params}"
            )

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ParameterVector":
        return cls(config, np.zeros(config.n_params))

    @classmethod
    def from_parts(cls, config: ModelConfig, baselines: Mapping, slopes: Optional[Mapping] = None):
        """Assemble from per-submodel baseline coefficients and slope mappings.

        ``slopes[name]`` maps a term label (``"a:b"``) to its coefficient;
        missing terms are zero.
        """
        phi = np.zeros(config.n_params)
        slopes = slopes or {}
        for name in SUBMODELS:
            _, bsl, ssl = config.layout[name]
            phi[bsl] = np.asarray(baselines[name], dtype=float)
            given = {term_label(parse_term(k)): v for k, v in slopes.get(name, {}).items()}
            labels = config.sub(name).labels
            unknown = set(given) - set(labels)
            if unknown:
                raise ConfigurationError(f"{name}: slopes for terms not in the model: {sorted(unknown)}")
            phi[ssl] = [given.get(lab, 0.0) for lab in labels]
        return cls(config, phi)

    def baseline(self, name: str) -> np.ndarray:
        return self.values[self.config.layout[name][1]]

    def slopes(self, name: str) -> np.ndarray:
        return self.values[self.config.layout[name][2]]

    def alpha(self, name: str) -> np.ndarray:
        """Baseline trend on the link scale, one value per interval."""
        return self.config.bases[name].T @ self.baseline(name)

    def slope_dict(self, name: str) -> dict:
        return dict(zip(self.config.sub(name).labels, self.slopes(name).tolist()))

    def linear_predictor(self, name: str, covariates: Mapping[str, float], k: int, y1_prev: int = 0) -> float:
        if not 1 <= k <= self.config.K:
            raise ConfigurationError(f"interval index {k} outside 1..{self.config.K}")
        spec = self.config.sub(name)
        row = term_row(spec.terms, covariates, y1_prev)
        return float(self.alpha(name)[k - 1] + row @ self.slopes(name))
