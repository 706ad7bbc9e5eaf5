import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from entropic_is import CrossEntropyImportanceSampler, GibbsProjection
from entropic_is.gibbs import ConvexMomentSet

X2 = np.array([[0.0], [1.0]])


def test_gibbs_projection_two_atoms():
    est = GibbsProjection(t0=[0.75]).fit(X2)
    assert est.beta_[0] == pytest.approx(math.log(3), abs=1e-12)
    assert est.log_partition_ == pytest.approx(math.log(2), abs=1e-12)
    np.testing.assert_allclose(est.transform(X2), [0.5, 1.5], atol=1e-12)
    assert est.n_features_in_ == 1


def test_gibbs_projection_with_weights_and_set():
    est = GibbsProjection(moment_set=ConvexMomentSet.box([0.7], [0.9]))
    est.fit(X2, sample_weight=[1.0, 1.0])
    assert est.moment_[0] == pytest.approx(0.7, abs=1e-10)
    w = np.array([0.2, 0.8])
    est = GibbsProjection(t0=[0.5]).fit(X2, sample_weight=w)
    assert est.beta_[0] == pytest.approx(math.log(0.25), abs=1e-12)


def test_gibbs_projection_errors():
    with pytest.raises(NotFittedError):
        GibbsProjection(t0=[0.5]).score_samples(X2)
    with pytest.raises(ValueError):
        GibbsProjection().fit(X2)
    with pytest.raises(ValueError):
        GibbsProjection(t0=[0.5]).fit(X2, sample_weight=[1.0, -1.0])


def test_params_and_clone():
    est = GibbsProjection(t0=[0.3], tol=1e-9)
    assert est.get_params() == {"t0": [0.3], "moment_set": None, "tol": 1e-9}
    assert clone(est).get_params()["tol"] == 1e-9


def test_cross_entropy_sampler():
    K = 10
    X = (np.arange(K, dtype=float) / (K - 1))[:, None]
    y = 2.0 * X[:, 0]
    est = CrossEntropyImportanceSampler(n_samples=10_000, max_iter=5, random_state=0).fit(X, y)
    assert abs(est.beta_[0] - 2.0) <= 3 * est.beta_std_error_[0]
    assert len(est.trajectory_) == est.n_iter_
    logq = est.score_samples(X)
    assert float(np.sum(np.exp(logq)) / K) == pytest.approx(1.0, abs=1e-12)
    again = clone(est).fit(X, y)
    np.testing.assert_array_equal(again.beta_, est.beta_)


def test_cross_entropy_sampler_shape_check():
    with pytest.raises(ValueError):
        CrossEntropyImportanceSampler().fit(X2, [0.0, 1.0, 2.0])
