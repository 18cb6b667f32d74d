"""Plain-data summaries of a fit, as written by the command line."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import __version__
from .fit import FitResult
from .inference import coefficient_table, curve
from .model import SUBMODELS, ParameterVector, config_from_dict


def curve_rows(params, covariance, which, profile=None) -> list:
    cuts = params.config.partition.cuts
    return [
        {
            "k": c.k,
            "t_left": cuts[c.k - 1],
            "t_right": cuts[c.k],
            "estimate": c.estimate,
            "lower": c.lower,
            "upper": c.upper,
            "link_scale": c.link_scale,
            "link_scale_se": c.link_scale_se,
        }
        for c in curve(params, covariance, which, profile)
    ]


def fit_summary(fit: FitResult, run_config: Optional[dict] = None, lambda_table=None, data_info=None) -> dict:
    cfg = fit.config
    return {
        "version": __version__,
        "config": run_config,
        "model": cfg.to_dict(),
        "data": data_info,
        "fit": {
            "loglik": fit.loglik_unpenalized,
            "penalized_loglik": fit.penalized_loglik,
            "aic": fit.aic,
            "edf": fit.edf,
            "lambda": list(fit.lambdas.as_tuple()),
            "n_params": cfg.n_params,
            "n_subjects": fit.n_subjects,
            "n_obs": fit.n_obs,
        },
        "convergence": fit.convergence,
        "warnings": fit.warnings,
        "lambda_table": lambda_table,
        "coefficients": coefficient_table(fit),
        "curves": {name: curve_rows(fit.params, fit.covariance, name) for name in SUBMODELS},
        "parameters": {"names": cfg.param_names, "values": fit.params.values.tolist()},
        "covariance": fit.covariance.tolist(),
    }


def load_fit_summary(summary: dict):
    """Rebuild ``(params, covariance)`` from a fit summary."""
    cfg = config_from_dict(summary["model"])
    params = ParameterVector(cfg, np.asarray(summary["parameters"]["values"], dtype=float))
    cov = np.array(
        [[np.nan if v is None else v for v in row] for row in summary["covariance"]], dtype=float
    )
    return params, cov
