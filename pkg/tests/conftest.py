import numpy as np
import pytest

from semicomp.likelihood import build_dataset
from semicomp.simulate import preset_config, scenario_presets, simulate_cohort
from semicomp.splinebasis import SplineConfig
from semicomp.timegrid import discretize_all


def cohort(preset="simple", n=200, seed=11, censoring=0.2, config=None):
    spec = scenario_presets(n, seed=seed, censoring=censoring)[preset]
    config = config or spec.config
    records = simulate_cohort(spec)
    return spec, build_dataset(discretize_all(records, config.partition), config)


@pytest.fixture(scope="session")
def simple_small():
    """N=200 simple-preset cohort with the unstructured analysis model."""
    return cohort()


@pytest.fixture(scope="session")
def spline_small():
    """N=200 simple-preset cohort with cubic B-spline baselines (7 terms)."""
    return cohort(config=preset_config(spline=SplineConfig(5, 3, 2)))


def interior_point(config, rng, scale=0.3):
    """A random parameter vector near a plausible truth."""
    phi = rng.normal(0.0, scale, config.n_params)
    for name, shift in (("pi1", -2.5), ("pi2", -2.5), ("theta", 0.5)):
        sl = config.layout[name][1]
        # spline bases sum to one, so a constant shift moves every alpha
        phi[sl] += shift
    return phi
