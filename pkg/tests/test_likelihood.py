import math

import numpy as np
import pytest

from semicomp.bivarprob import cell_probs, solve_pi12
from semicomp.errors import ConfigurationError
from semicomp.likelihood import (
    PenaltyWeights,
    build_dataset,
    gradient,
    loglik,
    penalized_loglik,
    penalty_gradient,
    score_and_hessian,
    subject_loglik,
    subject_logliks,
)
from semicomp.model import ModelConfig, ParameterVector
from semicomp.simulate import ScenarioSpec, _run, simulate_cohort
from semicomp.splinebasis import SplineConfig
from semicomp.timegrid import IntervalObservation, Partition, SubjectPath, discretize_all

from conftest import interior_point

PART = Partition.regular(0.0, 1.0, 4)
PI1, PI2_0, PI2_1, THETA = 0.2, 0.15, 0.35, 2.5


def const_params(config=None):
    config = config or ModelConfig.build(PART, {"pi2": ["y1_prev"]})
    logit = lambda p: math.log(p / (1 - p))
    return ParameterVector.from_parts(
        config,
        {"pi1": np.full(4, logit(PI1)), "pi2": np.full(4, logit(PI2_0)), "theta": np.full(4, math.log(THETA))},
        {"pi2": {"y1_prev": logit(PI2_1) - logit(PI2_0)}},
    )


def one_interval(prev, now, k=2):
    ob = IntervalObservation(k, prev[0], prev[1], now[0], now[1], {})
    return SubjectPath("one", k, k, (ob,))


def test_table1_contributions():
    p = const_params()
    v = solve_pi12(PI1, PI2_0, THETA)
    c = cell_probs(PI1, PI2_0, v)
    expected = {
        ((0, 0), (0, 0)): c.p00,
        ((0, 0), (1, 0)): c.p10,
        ((0, 0), (0, 1)): c.p01,
        ((0, 0), (1, 1)): c.p11,
        ((1, 0), (1, 0)): 1 - PI2_1,
        ((1, 0), (1, 1)): PI2_1,
    }
    for (prev, now), prob in expected.items():
        got = subject_loglik(p, one_interval(prev, now), p.config)
        assert got == pytest.approx(math.log(prob), abs=1e-13)


def test_event_free_cells_sum_to_one():
    p = const_params()
    total = sum(
        math.exp(subject_loglik(p, one_interval((0, 0), now), p.config))
        for now in [(0, 0), (1, 0), (0, 1), (1, 1)]
    )
    assert total == pytest.approx(1.0, abs=1e-12)


def test_factorization_over_intervals(simple_small):
    spec, data = simple_small
    rng = np.random.default_rng(3)
    phi = interior_point(data.config, rng)
    records = simulate_cohort(spec)
    paths = [p for p in discretize_all(records, data.config.partition) if len(p.observations) > 2]
    for path in paths[:10]:
        whole = subject_loglik(phi, path, data.config)
        parts = sum(
            subject_loglik(phi, SubjectPath(path.id, ob.k, ob.k, (ob,)), data.config)
            for ob in path.observations
        )
        assert whole == pytest.approx(parts, abs=1e-12)


def test_subject_logliks_sum(simple_small):
    _, data = simple_small
    phi = interior_point(data.config, np.random.default_rng(4))
    assert subject_logliks(phi, data).sum() == pytest.approx(loglik(phi, data), rel=1e-13)
    assert len(subject_logliks(phi, data)) == data.n_subjects


def test_penalty_properties(spline_small):
    _, data = spline_small
    cfg = data.config
    phi = interior_point(cfg, np.random.default_rng(5))
    ll = loglik(phi, data)
    assert penalized_loglik(phi, data, PenaltyWeights()) == ll

    lam = PenaltyWeights(0.7, 0.0, 0.0)
    sl = cfg.layout["pi1"][1]
    eta = phi[sl]
    pen = float(eta @ cfg.penalties["pi1"] @ eta)
    one = penalized_loglik(phi, data, lam)
    two = penalized_loglik(phi, data, PenaltyWeights(1.4, 0.0, 0.0))
    assert one == pytest.approx(ll - 0.7 * pen, rel=1e-13)
    assert two - one == pytest.approx(-0.7 * pen, rel=1e-10)

    lin = phi.copy()
    for name in ("pi1", "pi2", "theta"):
        s = cfg.layout[name][1]
        lin[s] = -2.0 + 0.1 * np.arange(s.stop - s.start)
    assert penalized_loglik(lin, data, PenaltyWeights.common(3.0)) == pytest.approx(loglik(lin, data), abs=1e-9)

    lam = PenaltyWeights(0.5, 1.0, 2.0)
    g = penalty_gradient(phi, cfg, lam)
    for name, w in lam.by_submodel().items():
        s = cfg.layout[name][1]
        np.testing.assert_array_equal(g[s], 2.0 * w * (cfg.penalties[name] @ phi[s]))


def test_nonzero_penalty_on_unstructured_block_rejected(simple_small):
    _, data = simple_small
    phi = interior_point(data.config, np.random.default_rng(6))
    with pytest.raises(ConfigurationError):
        penalized_loglik(phi, data, PenaltyWeights.common(1.0))


def fd_gradient(f, phi, rel=1e-5):
    out = np.empty_like(phi)
    for j in range(phi.size):
        h = rel * max(1.0, abs(phi[j]))
        up, dn = phi.copy(), phi.copy()
        up[j] += h
        dn[j] -= h
        out[j] = (f(up) - f(dn)) / (2 * h)
    return out


@pytest.mark.parametrize("fixture", ["simple_small", "spline_small"])
def test_gradient_matches_finite_differences(fixture, request):
    _, data = request.getfixturevalue(fixture)
    lam = PenaltyWeights.common(1.5).for_config(data.config)
    rng = np.random.default_rng(7)
    for _ in range(3):
        phi = interior_point(data.config, rng)
        g = gradient(phi, data, lam)
        fd = fd_gradient(lambda x: penalized_loglik(x, data, lam), phi)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6


def test_scores_sum_to_gradient_and_hessian_is_symmetric(spline_small):
    _, data = spline_small
    lam = PenaltyWeights.common(2.0)
    phi = interior_point(data.config, np.random.default_rng(8))
    rep = score_and_hessian(phi, data, lam)
    np.testing.assert_allclose(rep.per_subject_scores.sum(axis=0), gradient(phi, data, lam), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(rep.hessian, rep.hessian.T, rtol=1e-8, atol=1e-8)
    assert rep.per_subject_scores.shape == (data.n_subjects, data.config.n_params)
    rep0 = score_and_hessian(phi, data, PenaltyWeights())
    np.testing.assert_array_equal(rep0.hessian, rep0.hessian_unpenalized)


def test_hessian_matches_full_finite_differences():
    # a small instance where second differences of the log-likelihood are affordable
    cfg = ModelConfig.build(Partition.regular(0.0, 1.0, 3), {"pi1": ["x"], "pi2": ["y1_prev"]})
    truth = ParameterVector.from_parts(
        cfg, {"pi1": [-1.5, -1.2, -1.0], "pi2": [-1.8, -1.5, -1.2], "theta": [0.8, 0.8, 0.8]},
        {"pi1": {"x": 0.5}, "pi2": {"y1_prev": 0.6}},
    )
    from semicomp.simulate import CovariateSpec

    spec = ScenarioSpec(truth, 150, (CovariateSpec("x", "normal"),), seed=2)
    data = build_dataset(discretize_all(simulate_cohort(spec), cfg.partition), cfg)
    phi = truth.values + 0.05
    H = score_and_hessian(phi, data).hessian
    n = phi.size
    h = 1e-4
    full = np.empty((n, n))
    f = lambda x: loglik(x, data)
    for i in range(n):
        for j in range(n):
            e_i, e_j = np.eye(n)[i] * h, np.eye(n)[j] * h
            full[i, j] = (f(phi + e_i + e_j) - f(phi + e_i - e_j) - f(phi - e_i + e_j) + f(phi - e_i - e_j)) / (4 * h * h)
    np.testing.assert_allclose(H, full, rtol=1e-4, atol=1e-3)


def test_simulated_cell_frequencies():
    # 10^6 first intervals drawn by the simulator at fixed (pi1, pi2, theta)
    cfg = ModelConfig.build(Partition.regular(0.0, 1.0, 2))
    logit = lambda p: math.log(p / (1 - p))
    truth = ParameterVector.from_parts(
        cfg, {"pi1": [logit(0.3)] * 2, "pi2": [logit(0.2)] * 2, "theta": [math.log(4.0)] * 2}
    )
    spec = ScenarioSpec(truth, 10**6, seed=99)
    _, k1, k2, _, _, _ = _run(spec, np.random.default_rng(99), spec.n_subjects, 0.0)
    y1, y2 = k1 == 1, k2 == 1
    freq = np.array([np.mean(~y1 & ~y2), np.mean(y1 & ~y2), np.mean(~y1 & y2), np.mean(y1 & y2)])
    probs = np.array(cell_probs(0.3, 0.2, solve_pi12(0.3, 0.2, 4.0)).as_tuple())
    se = np.sqrt(probs * (1 - probs) / spec.n_subjects)
    assert np.all(np.abs(freq - probs) < 3 * se)
