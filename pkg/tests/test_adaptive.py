import csv
import math
import warnings

import numpy as np
import pytest

from entropic_is import adaptive, gibbs
from entropic_is.exceptions import WeightDegeneracyWarning
from entropic_is.measures import FiniteDistribution, GaussianModel, Statistic
from entropic_is.smc import SmcConfig

K = 10
PI = FiniteDistribution.from_probs(np.full(K, 1.0 / K))
T = (np.arange(K, dtype=float) / (K - 1))[:, None]


def tilted_target(beta):
    return beta * T[:, 0]


def test_fixed_point_in_family():
    beta = 2.0
    state = adaptive.initial_state(PI, T, [beta])
    new = adaptive.ce_step(state, tilted_target(beta), PI, T, 10_000, rng=0)
    assert abs(new.beta[0] - beta) <= 3 * new.beta_std_error[0]
    assert new.ess == pytest.approx(10_000, rel=1e-9)


def test_in_family_recovery():
    res = adaptive.run_cross_entropy(tilted_target(2.0), PI, T, 10_000, max_iter=5, rng=1)
    assert res.n_iter <= 5
    assert abs(res.beta[0] - 2.0) <= 3 * res.final.beta_std_error[0]


def test_out_of_family_moment_matching():
    x = np.arange(K)
    eta = np.exp(-0.5 * ((x - 1.5) / 0.8) ** 2) + np.exp(-0.5 * ((x - 7.5) / 0.8) ** 2)
    eta /= eta.sum()
    target_moment = float(eta @ T[:, 0])
    res = adaptive.run_cross_entropy(np.log(eta / PI.probs), PI, T, 10_000, max_iter=5, rng=2)
    moment = res.final.model.moment()[0]
    assert abs(moment - target_moment) <= 3 * res.final.moment_std_error[0]


def test_step_equals_worst_case_projection():
    rng = np.random.default_rng(3)
    for _ in range(5):
        probs = rng.dirichlet(np.ones(K))
        pi = FiniteDistribution.from_probs(probs)
        table = rng.standard_normal((K, 2))
        state = adaptive.initial_state(pi, table, rng.normal(size=2) * 0.3)
        target = rng.normal(size=K)
        new = adaptive.ce_step(state, target, pi, table, 2000, rng=rng)
        worst = gibbs.solve_convex_constraint(pi, table, gibbs.ConvexMomentSet.singleton(new.moment))
        np.testing.assert_allclose(new.beta, worst.beta, rtol=0, atol=1e-10)


def test_confidence_variant_limits():
    state = adaptive.initial_state(PI, T, [0.0])
    wide = adaptive.ce_step_confidence(state, tilted_target(1.0), PI, T, 2000, rng=4,
                                       z_multiplier=1e6)
    assert wide.beta[0] == 0.0
    narrow = adaptive.ce_step_confidence(state, tilted_target(1.0), PI, T, 2000, rng=5,
                                         z_multiplier=0.0)
    plain = adaptive.ce_step(state, tilted_target(1.0), PI, T, 2000, rng=5)
    assert narrow.beta[0] == pytest.approx(plain.beta[0], abs=1e-10)


def test_confidence_box():
    rng = np.random.default_rng(6)
    t = rng.normal(size=(500, 2))
    w = np.full(500, 1 / 500)
    box = adaptive.ConfidenceMomentSet.from_ensemble(t, w, 2.0, 200, rng)
    np.testing.assert_allclose(box.radius, 2.0 / math.sqrt(500), rtol=0.25)
    assert box.as_convex_set().kind == "box"
    assert adaptive.ConfidenceMomentSet([0.0], [0.0]).as_convex_set().kind == "singleton"
    with pytest.raises(ValueError):
        adaptive.ConfidenceMomentSet([0.0], [-1.0])


def test_trust_region_fallback():
    # a target concentrated on the top atom pushes the moment to the hull edge
    target = np.full(K, -1e3)
    target[-1] = 0.0
    state = adaptive.initial_state(PI, T, [0.0])
    new = adaptive.ce_step(state, target, PI, T, 1000, rng=7)
    assert new.trust_region_steps >= 1
    assert np.isfinite(new.beta[0]) and new.beta[0] > 0


def test_degenerate_weights_warn():
    target = np.zeros(K)
    target[0] = 60.0
    state = adaptive.initial_state(PI, T, [20.0])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        adaptive.ce_step(state, target, PI, T, 200, rng=8)
    assert any(issubclass(w.category, WeightDegeneracyWarning) for w in caught)


def test_trajectory_csv_and_json(tmp_path):
    res = adaptive.run_cross_entropy(tilted_target(1.0), PI, T, 2000, max_iter=3, rng=9)
    res.trajectory_to_csv(tmp_path / "t.csv")
    with open(tmp_path / "t.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["k", "beta_0", "ess", "moment_0"]
    assert len(rows) == res.n_iter
    d = res.to_dict()
    assert d["beta"] == res.beta.tolist()


def test_continuous_reference_with_smc():
    pi = GaussianModel()
    T1 = Statistic.identity()
    target = lambda x: 1.5 * x[:, 0]
    res = adaptive.run_cross_entropy(target, pi, T1, 4000, max_iter=3, rng=10,
                                     smc_config=SmcConfig(particle_count=4000, n_stages=10),
                                     n_reference=50_000)
    assert res.beta[0] == pytest.approx(1.5, abs=0.25)


def test_bad_variant():
    with pytest.raises(ValueError):
        adaptive.run_cross_entropy(tilted_target(1.0), PI, T, 100, variant="other")
