import math

import numpy as np
import pytest

from semicomp.errors import ConfigurationError
from semicomp.fit import maximize
from semicomp.likelihood import PenaltyWeights, build_dataset
from semicomp.model import ModelConfig, ParameterVector
from semicomp.simulate import (
    PRESET_NAMES,
    ScenarioSpec,
    censoring_proportion,
    scenario_presets,
    simulate_cohort,
)
from semicomp.study import run_study
from semicomp.timegrid import Partition, discretize_all


def test_same_seed_same_cohort():
    spec = scenario_presets(300, seed=5)["complex"]
    assert simulate_cohort(spec) == simulate_cohort(spec)
    assert simulate_cohort(spec, replicate=1) == simulate_cohort(spec, replicate=1)
    assert simulate_cohort(spec, replicate=1) != simulate_cohort(spec, replicate=2)
    assert simulate_cohort(spec) != simulate_cohort(spec.with_(seed=6))


def test_records_are_valid_and_stop_at_death():
    spec = scenario_presets(2000, seed=8)["simple"]
    part = spec.config.partition
    records = simulate_cohort(spec)
    assert len(records) == 2000
    assert len({r.id for r in records}) == 2000
    for r in records:
        assert r.t2_obs in part.cuts and r.entry in part.cuts
        if r.d1:
            assert r.entry < r.t1_obs <= r.t2_obs
    for path in discretize_all(records, part):
        rec_dead = any(o.y2 for o in path.observations)
        if rec_dead:
            assert path.observations[-1].y2 == 1
            assert sum(o.y2 for o in path.observations) == 1


def test_entry_distribution_matches_preset():
    spec = scenario_presets(20000, seed=9)["null"]
    records = simulate_cohort(spec)
    first = np.array([spec.config.partition.cuts.index(r.entry) + 1 for r in records])
    freq = np.bincount(first, minlength=11)[1:]
    assert freq[0] / 20000 == pytest.approx(0.6, abs=0.015)
    assert freq[4:].sum() == 0


def test_independence_gives_unit_odds_ratio():
    cfg = ModelConfig.build(Partition.regular(0.0, 1.0, 3))
    truth = ParameterVector.from_parts(
        cfg, {"pi1": [-1.0, -1.0, -1.0], "pi2": [-1.2, -1.2, -1.2], "theta": [0.0, 0.0, 0.0]}
    )
    records = simulate_cohort(ScenarioSpec(truth, 10**5, seed=10))
    paths = discretize_all(records, cfg.partition)
    n = np.zeros((2, 2))
    for p in paths:
        o = p.observations[0]
        n[o.y1, o.y2] += 1
    log_or = math.log(n[1, 1] * n[0, 0] / (n[1, 0] * n[0, 1]))
    se = math.sqrt((1.0 / n).sum())
    assert abs(log_or) < 3 * se


@pytest.mark.parametrize("target", [0.1, 0.3])
def test_censoring_rate_calibrated(target):
    spec = scenario_presets(5000, seed=12, censoring=target)["simple"]
    realized = censoring_proportion(simulate_cohort(spec), spec.config.partition)
    assert abs(realized - target) <= 0.03


def test_no_random_censoring_without_target():
    spec = scenario_presets(2000, seed=13, censoring=None)["simple"]
    assert censoring_proportion(simulate_cohort(spec), spec.config.partition) == 0.0


def test_invalid_truth_names_interval():
    cfg = ModelConfig.build(Partition.regular(0.0, 1.0, 3), links={"pi1": "identity"})
    truth = ParameterVector.from_parts(
        cfg, {"pi1": [0.2, 1.4, 0.2], "pi2": [-1.0] * 3, "theta": [0.0] * 3}
    )
    with pytest.raises(ConfigurationError, match="interval 2"):
        simulate_cohort(ScenarioSpec(truth, 100, seed=1))


def test_spec_validation():
    spec = scenario_presets(10)["simple"]
    with pytest.raises(ConfigurationError):
        spec.with_(censoring=0.4)
    with pytest.raises(ConfigurationError):
        spec.with_(n_subjects=0)
    with pytest.raises(ConfigurationError):
        spec.with_(covariates=())


def test_presets_have_declared_dependence():
    presets = scenario_presets(100)
    assert tuple(presets) == PRESET_NAMES
    null, simple, cx = presets["null"].truth, presets["simple"].truth, presets["complex"].truth
    assert np.all(null.alpha("theta") == 0) and null.slope_dict("pi2")["y1_prev"] == 0
    assert np.allclose(simple.alpha("theta"), math.log(3.0))
    assert simple.slope_dict("pi2")["y1_prev"] == pytest.approx(math.log(2.0))
    a = cx.alpha("theta")
    assert np.ptp(a) > 1.0 and np.all(np.diff(a) < 0)
    assert cx.slope_dict("theta")["x1"] != 0 and cx.slope_dict("pi2")["y1_prev:x1"] != 0
    assert np.all(np.diff(simple.alpha("pi2")) > 0)
    man = presets["complex"].manifest()
    assert man["truth"]["names"] == cx.config.param_names
    assert "not estimates" in man["note"]


def test_null_preset_round_trip():
    spec = scenario_presets(2000, seed=14)["null"]
    data = build_dataset(discretize_all(simulate_cohort(spec), spec.config.partition), spec.config)
    fit = maximize(data, PenaltyWeights())
    se = fit.standard_errors()
    names = fit.config.param_names
    for i, n in enumerate(names):
        if n.startswith("theta.") or n == "pi2.y1_prev":
            assert abs(fit.params.values[i]) < 3 * se[i], n


@pytest.mark.slow
def test_null_preset_global_dependence_unbiased():
    spec = scenario_presets(2000, seed=15, censoring=0.2)["null"]
    res = run_study(spec, spec.config, 200)
    j = res.names.index("pi2.y1_prev")
    assert res.failures == 0
    assert abs(res.bias()[j]) < 0.02
