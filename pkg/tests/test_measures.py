import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropic_is._validation import check_random_state, named_stream
from entropic_is.exceptions import AllWeightsDegenerate, MismatchedSupport
from entropic_is.measures import (CategoricalModel, FiniteDistribution, GaussianModel, Statistic,
                                  UniformModel, WeightedEnsemble, effective_sample_size,
                                  empirical_mean, normalize)


def test_finite_distribution_validates():
    with pytest.raises(ValueError):
        FiniteDistribution.from_probs([0.5, 0.6])
    with pytest.raises(ValueError):
        FiniteDistribution.from_probs([1.5, -0.5])
    with pytest.raises(ValueError):
        FiniteDistribution((1, 1), [0.5, 0.5])


def test_finite_distribution_alignment():
    a = FiniteDistribution(("x", "y"), [0.2, 0.8])
    b = FiniteDistribution(("y", "x"), [0.5, 0.5])
    np.testing.assert_allclose(a.aligned_to(b), [0.8, 0.2])
    with pytest.raises(MismatchedSupport):
        a.aligned_to(FiniteDistribution(("x", "z"), [0.5, 0.5]))


def test_finite_distribution_csv_roundtrip(tmp_path):
    d = FiniteDistribution(((0, 1), (1, 1), "a"), [0.1, 0.3, 0.6])
    d.to_csv(tmp_path / "d.csv")
    back = FiniteDistribution.from_csv(tmp_path / "d.csv")
    assert back.atoms == d.atoms
    np.testing.assert_array_equal(back.probs, d.probs)


def test_normalized_weights_examples():
    np.testing.assert_allclose(normalize(WeightedEnsemble(np.zeros(4))).normalized_weights(), 0.25)
    w = WeightedEnsemble([0.0, 1.0], [0.0, math.log(3)]).normalized_weights()
    np.testing.assert_allclose(w, [0.25, 0.75], rtol=1e-15)
    w = WeightedEnsemble([0.0, 1.0], [-1e308, 0.0]).normalized_weights()
    np.testing.assert_array_equal(w, [0.0, 1.0])


def test_empirical_mean_examples():
    assert empirical_mean(WeightedEnsemble([[3.0]]))[0] == 3.0
    assert empirical_mean(WeightedEnsemble([0.0, 2.0]))[0] == 1.0


def test_empirical_mean_tilted_gaussian():
    rng = check_random_state(11)
    x = rng.standard_normal(100_000)
    ens = WeightedEnsemble(x, 0.5 * x)
    w = ens.normalized_weights()
    mean = empirical_mean(ens)[0]
    se = math.sqrt(np.sum(w**2 * (x - mean) ** 2))
    assert abs(mean - 0.5) <= 3 * se


def test_effective_sample_size_examples():
    assert effective_sample_size(WeightedEnsemble(np.zeros(4))) == pytest.approx(4.0, rel=1e-15)
    ens = WeightedEnsemble(np.zeros(4), [0.0, -np.inf, -np.inf, -np.inf])
    assert effective_sample_size(ens) == pytest.approx(1.0)
    ens = WeightedEnsemble(np.zeros(3), np.log([0.5, 0.25, 0.25]))
    assert effective_sample_size(ens) == pytest.approx(8 / 3, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
def test_ess_bounds(logw):
    ens = WeightedEnsemble(np.zeros(len(logw)), logw)
    ess = effective_sample_size(ens)
    assert 1.0 - 1e-12 <= ess <= len(logw) * (1 + 1e-12)
    assert abs(ens.normalized_weights().sum() - 1.0) < 1e-12


def test_all_weights_degenerate():
    with pytest.raises(AllWeightsDegenerate):
        WeightedEnsemble([0.0, 1.0], [-np.inf, -np.inf]).normalized_weights()


def test_ensemble_rejects_bad_weights():
    with pytest.raises(ValueError):
        WeightedEnsemble([0.0, 1.0], [0.0, np.nan])
    with pytest.raises(ValueError):
        WeightedEnsemble([0.0, 1.0], [0.0])


def test_ensemble_csv_roundtrip(tmp_path):
    ens = WeightedEnsemble(np.arange(6.0).reshape(3, 2), [0.0, -1.0, 2.5])
    ens.to_csv(tmp_path / "e.csv")
    back = WeightedEnsemble.from_csv(tmp_path / "e.csv")
    np.testing.assert_array_equal(back.points, ens.points)
    np.testing.assert_array_equal(back.log_weights, ens.log_weights)


def test_statistic_shapes():
    T = Statistic(lambda x: np.column_stack([x[:, 0], x[:, 0] ** 2]), 2)
    out = T.evaluate([1.0, 2.0])
    np.testing.assert_array_equal(out, [[1, 1], [2, 4]])
    with pytest.raises(ValueError):
        Statistic(lambda x: x[:, 0], 2).evaluate([1.0])


def test_models_sample_and_density():
    rng = check_random_state(3)
    g = GaussianModel(1.0, 2.0)
    x = g.draw(rng, 20_000)
    assert abs(x.mean() - 1.0) < 0.1
    assert g.log_density(np.array([[1.0]]))[0] == pytest.approx(-math.log(2.0 * math.sqrt(2 * math.pi)))
    u = UniformModel(0.0, 2.0)
    assert np.all((u.draw(rng, 100) >= 0) & (u.draw(rng, 100) <= 2))
    c = CategoricalModel.from_finite(FiniteDistribution.from_probs([0.25, 0.75]))
    draws = c.draw(rng, 40_000)
    assert abs(draws.mean() - 0.75) < 0.01


def test_named_streams_are_reproducible_and_distinct():
    a = named_stream(5, "smc").random(4)
    b = named_stream(5, "smc").random(4)
    c = named_stream(5, "nstar").random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    with pytest.raises(TypeError):
        check_random_state("seed")
