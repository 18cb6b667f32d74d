"""Run configuration for the command line (YAML or JSON files).

Example::

    partition: {origin: 65, width: 5, count: 7}   # or  cuts: [65, 70, ...]
    censor_mode: drop_partial
    baseline: {mode: bspline, num_knots: 5, degree: 3, penalty_order: 2}
    links: {pi1: logit, pi2: logit, theta: log}
    terms:
      pi1: [female, apoe, "female:apoe"]
      pi2: [female, apoe, y1_prev, "y1_prev:female"]
      theta: [female, apoe]
    lambda: [0.0, 0.1, 0.5, 1.0, 2.5, 5.0]
    data: cohort.csv
    out: fit.json

``baseline`` may also map submodel names to their own specification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .errors import ConfigurationError
from .likelihood import PenaltyWeights
from .model import DEFAULT_LINKS, SUBMODELS, ModelConfig, SubmodelSpec
from .splinebasis import SplineConfig
from .timegrid import CENSOR_MODES, Partition

KNOWN_KEYS = {
    "partition", "censor_mode", "baseline", "links", "terms", "lambda",
    "data", "tv_data", "out", "seed", "threads", "simulate", "warm_start",
}


@dataclass
class RunConfig:
    model: Optional[ModelConfig] = None
    censor_mode: str = "drop_partial"
    lambdas: list = field(default_factory=lambda: [PenaltyWeights()])
    data: Optional[str] = None
    tv_data: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    threads: int = 1
    warm_start: bool = True
    simulate: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Fully explicit form echoed into outputs."""
        return {
            "model": self.model.to_dict() if self.model is not None else None,
            "censor_mode": self.censor_mode,
            "lambda": [list(l.as_tuple()) for l in self.lambdas],
            "data": self.data,
            "tv_data": self.tv_data,
            "seed": self.seed,
            "threads": self.threads,
            "warm_start": self.warm_start,
            "simulate": dict(self.simulate) or None,
        }


def _partition(spec) -> Partition:
    if isinstance(spec, (list, tuple)):
        return Partition(tuple(spec))
    if not isinstance(spec, Mapping):
        raise ConfigurationError("partition must be a list of cuts or a mapping")
    if "cuts" in spec:
        return Partition(tuple(spec["cuts"]))
    try:
        return Partition.regular(float(spec["origin"]), float(spec["width"]), int(spec["count"]))
    except KeyError as err:
        raise ConfigurationError(f"partition needs 'cuts' or origin/width/count (missing {err})") from None


def _spline(spec) -> Optional[SplineConfig]:
    if spec is None or spec == "unstructured":
        return None
    if not isinstance(spec, Mapping):
        raise ConfigurationError(f"bad baseline specification {spec!r}")
    mode = spec.get("mode", "bspline")
    if mode == "unstructured":
        return None
    if mode != "bspline":
        raise ConfigurationError(f"baseline mode must be unstructured or bspline, got {mode!r}")
    try:
        knots = spec.get("knots")
        num = int(spec.get("num_knots", len(knots) if knots else 0))
        return SplineConfig(num, int(spec.get("degree", 3)), int(spec.get("penalty_order", 2)),
                            tuple(knots) if knots else None)
    except (TypeError, ValueError) as err:
        raise ConfigurationError(f"bad spline specification: {err}") from None


def _baselines(spec) -> dict:
    if isinstance(spec, Mapping) and set(spec) & set(SUBMODELS):
        extra = set(spec) - set(SUBMODELS)
        if extra:
            raise ConfigurationError(f"unknown submodels in baseline: {sorted(extra)}")
        return {name: _spline(spec.get(name)) for name in SUBMODELS}
    one = _spline(spec)
    return {name: one for name in SUBMODELS}


def _lambdas(spec) -> list:
    if spec is None:
        return [PenaltyWeights()]
    if isinstance(spec, (int, float)):
        spec = [spec]
    out = []
    for v in spec:
        if isinstance(v, (list, tuple)):
            if len(v) != 3:
                raise ConfigurationError("per-block penalties need three values")
            out.append(PenaltyWeights(*(float(x) for x in v)))
        else:
            out.append(PenaltyWeights.common(float(v)))
    if not out:
        raise ConfigurationError("penalty grid is empty")
    return out


def parse_run_config(raw: Mapping, base_dir: Optional[Path] = None) -> RunConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigurationError("configuration must be a mapping")
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")

    def path(key):
        v = raw.get(key)
        if v is None:
            return None
        p = Path(v)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return str(p)

    model = None
    if "partition" in raw:
        partition = _partition(raw["partition"])
        links = {**DEFAULT_LINKS, **(raw.get("links") or {})}
        terms = raw.get("terms") or {}
        extra = (set(links) | set(terms)) - set(SUBMODELS)
        if extra:
            raise ConfigurationError(f"unknown submodels: {sorted(extra)}")
        splines = _baselines(raw.get("baseline"))
        model = ModelConfig(
            partition,
            **{n: SubmodelSpec(links[n], tuple(terms.get(n) or ()), splines[n]) for n in SUBMODELS},
        )

    censor_mode = raw.get("censor_mode", "drop_partial")
    if censor_mode not in CENSOR_MODES:
        raise ConfigurationError(f"censor_mode must be one of {CENSOR_MODES}")
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise ConfigurationError("threads must be >= 1")
    return RunConfig(
        model=model,
        censor_mode=censor_mode,
        lambdas=_lambdas(raw.get("lambda")),
        data=path("data"),
        tv_data=path("tv_data"),
        out=path("out"),
        seed=int(raw.get("seed", 0)),
        threads=threads,
        warm_start=bool(raw.get("warm_start", True)),
        simulate=dict(raw.get("simulate") or {}),
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigurationError(f"{where}: invalid YAML ({getattr(err, 'problem', err)})") from None
    except OSError as err:
        raise ConfigurationError(f"cannot read config {path}: {err}") from None
    return parse_run_config(raw)
