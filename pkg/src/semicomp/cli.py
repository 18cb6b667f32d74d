"""Command line: ``semicomp fit | simulate | curves``.

Exit codes: 0 success, 2 input or configuration error, 3 numerical or
convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import RunConfig, load_run_config, parse_run_config
from .errors import ConfigurationError, DomainError, NumericalDomainError, SemiCompError
from .fit import maximize, select_lambda
from .io import SchemaError, dump_json, read_cohort_csv, write_cohort_csv
from .likelihood import PenaltyWeights, build_dataset
from .results import curve_rows, fit_summary, load_fit_summary
from .simulate import PRESET_NAMES, censoring_proportion, scenario_presets, simulate_cohort
from .timegrid import discretize_all

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

logger = logging.getLogger("semicomp")


class InputError(Exception):
    pass


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else parse_run_config({})
    if getattr(args, "data", None):
        cfg.data = args.data
    if getattr(args, "tv_data", None):
        cfg.tv_data = args.tv_data
    if getattr(args, "out", None):
        cfg.out = args.out
    if getattr(args, "lambda_", None):
        cfg.lambdas = [PenaltyWeights.common(v) for v in args.lambda_]
    if getattr(args, "censor_mode", None):
        cfg.censor_mode = args.censor_mode
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        cfg.threads = args.threads
    return cfg


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    if cfg.model is None:
        raise ConfigurationError("fit needs a partition and model in --config")
    if not cfg.data:
        raise ConfigurationError("fit needs --data")
    if not cfg.out:
        raise ConfigurationError("fit needs --out")
    records = read_cohort_csv(cfg.data, cfg.tv_data)
    paths = discretize_all(records, cfg.model.partition, cfg.censor_mode)
    data = build_dataset(paths, cfg.model)

    with threadpool_limits(limits=cfg.threads):
        if len(cfg.lambdas) == 1:
            fit = maximize(data, cfg.lambdas[0].for_config(cfg.model))
            table = None
        else:
            fit, table = select_lambda(data, cfg.lambdas, warm_start=cfg.warm_start)
        info = {"n_records": len(records), "n_subjects": data.n_subjects,
                "n_empty": data.n_empty, "n_obs": data.n_obs}
        summary = fit_summary(fit, cfg.resolved(), table, info)
    dump_json(summary, cfg.out)
    if not fit.converged:
        print(f"fit did not converge: {fit.convergence['status']}", file=sys.stderr)
        return EXIT_NUMERIC
    if "covariance" in fit.warnings:
        print(f"covariance unavailable: {fit.warnings['covariance']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    sim = dict(cfg.simulate)
    preset = args.preset or sim.get("preset", "simple")
    if preset not in PRESET_NAMES:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {PRESET_NAMES}")
    n = args.n_subjects if args.n_subjects is not None else int(sim.get("n_subjects", 500))
    censoring = args.censoring if args.censoring is not None else sim.get("censoring", 0.2)
    K = int(sim.get("K", 10))
    if not cfg.out:
        raise ConfigurationError("simulate needs --out")
    spec = scenario_presets(n, cfg.seed, censoring if censoring else None, K)[preset]
    records = simulate_cohort(spec)

    out = Path(cfg.out)
    stem = out.with_suffix("")
    tv_path = stem.parent / f"{stem.name}_tv.csv"
    manifest_path = stem.parent / f"{stem.name}_manifest.json"
    model_path = stem.parent / f"{stem.name}_model.yaml"
    try:
        write_cohort_csv(records, out, tv_path)
        manifest = spec.manifest()
        manifest["realized_censoring"] = censoring_proportion(records, spec.config.partition)
        manifest["files"] = {"data": out.name, "tv_data": tv_path.name}
        dump_json(manifest, manifest_path)
        model = spec.config.to_dict()
        analysis = {
            "partition": {"cuts": model["cuts"]},
            "terms": {k: v["terms"] for k, v in model["submodels"].items()},
            "links": {k: v["link"] for k, v in model["submodels"].items()},
            "baseline": "unstructured",
            "data": str(out),
            "tv_data": str(tv_path),
            "seed": cfg.seed,
        }
        model_path.write_text(yaml_dump(analysis))
    except OSError as err:
        raise InputError(f"cannot write output: {err}") from None
    return EXIT_OK


def yaml_dump(obj) -> str:
    import yaml

    return yaml.safe_dump(obj, sort_keys=True, default_flow_style=None)


def cmd_curves(args) -> int:
    try:
        summary = json.loads(Path(args.fit).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise InputError(f"cannot read fit file {args.fit}: {err}") from None
    params, cov = load_fit_summary(summary)
    profile = {}
    for item in args.profile or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"profile entries look like name=value, got {item!r}")
        try:
            profile[name.strip()] = float(value)
        except ValueError:
            raise ConfigurationError(f"profile value for {name!r} is not a number") from None
    rows = curve_rows(params, cov, args.which, profile)
    fields = ["k", "t_left", "t_right", "estimate", "lower", "upper"]
    try:
        with Path(args.out).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in rows:
                w.writerow([r["k"]] + [repr(float(r[f])) for f in fields[1:]])
    except OSError as err:
        raise InputError(f"cannot write output: {err}") from None
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semicomp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit the model and write a JSON summary")
    f.add_argument("--config", help="YAML run configuration")
    f.add_argument("--data", help="subject-level CSV")
    f.add_argument("--tv-data", dest="tv_data", help="long-format time-varying covariates CSV")
    f.add_argument("--out", help="output JSON path")
    f.add_argument("--lambda", dest="lambda_", type=float, action="append",
                   help="common penalty; repeat to search a grid by AIC")
    f.add_argument("--censor-mode", dest="censor_mode", choices=["drop_partial", "round_up"])
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=int)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a cohort from a preset scenario")
    s.add_argument("--config", help="YAML with a 'simulate' section")
    s.add_argument("--preset", choices=PRESET_NAMES)
    s.add_argument("--n-subjects", dest="n_subjects", type=int)
    s.add_argument("--censoring", type=float, help="target random censoring proportion (0-0.3)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output cohort CSV path")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("curves", help="per-interval curve with 95%% band as CSV")
    c.add_argument("--fit", required=True, help="JSON written by 'semicomp fit'")
    c.add_argument("--which", required=True, choices=["pi1", "pi2", "theta"])
    c.add_argument("--profile", action="append", metavar="NAME=VALUE",
                   help="covariate value (repeatable); y1_prev=1 for pi2 after the non-terminal event")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curves)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, ConfigurationError, DomainError, InputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalDomainError, SemiCompError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
