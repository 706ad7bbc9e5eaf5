"""scikit-learn style front ends for the Gibbs projection and cross-entropy fits.

Both estimators take ``X`` as the table of statistic values ``T(x)`` on the
support points of a finite (or empirical) reference, with the reference
probabilities passed as ``sample_weight``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .adaptive import run_cross_entropy
from .gibbs import ConvexMomentSet, solve_convex_constraint, solve_linear_family
from .measures import FiniteDistribution

__all__ = ["GibbsProjection", "CrossEntropyImportanceSampler"]


def _reference(X, sample_weight):
    n = X.shape[0]
    if sample_weight is None:
        w = np.full(n, 1.0 / n)
    else:
        w = check_array(sample_weight, ensure_2d=False, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("sample_weight must be nonnegative with one entry per row")
        w = w / w.sum()
    return FiniteDistribution(tuple(range(n)), w)


class GibbsProjection(BaseEstimator):
    """Entropy projection of a weighted reference onto a moment constraint.

    Parameters
    ----------
    t0 : array-like of shape (d,), optional
        Target moment (linear family).
    moment_set : ConvexMomentSet, optional
        Convex moment constraint; used when ``t0`` is None.
    tol : float
        Moment tolerance handed to the solver.

    Attributes
    ----------
    beta_ : ndarray of shape (d,)
    log_partition_ : float
    moment_ : ndarray of shape (d,)
    n_iter_ : int
    model_ : GibbsModel
    """

    def __init__(self, t0=None, moment_set=None, tol=1e-10):
        self.t0 = t0
        self.moment_set = moment_set
        self.tol = tol

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, dtype=float)
        pi = _reference(X, sample_weight)
        if self.t0 is not None:
            model = solve_linear_family(pi, X, self.t0, tol=self.tol)
        elif self.moment_set is not None:
            model = solve_convex_constraint(pi, X, self.moment_set, newton_tol=self.tol)
        else:
            raise ValueError("set either t0 or moment_set")
        self.model_ = model
        self.beta_ = model.beta
        self.log_partition_ = model.log_partition
        self.moment_ = model.moment()
        self.n_iter_ = model.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        """``ln d mu_beta / d pi`` at the statistic values ``X``."""
        check_is_fitted(self, "beta_")
        X = check_array(X, dtype=float)
        return X @ self.beta_ - self.log_partition_

    def transform(self, X):
        """Tilt weights ``exp<beta, T> / Z`` relative to the reference."""
        return np.exp(self.score_samples(X))


class CrossEntropyImportanceSampler(BaseEstimator):
    """Cross-entropy fit of a Gibbs proposal to a target on a finite reference.

    ``fit(X, y, sample_weight)`` reads ``X`` as the statistic table,
    ``y`` as the unnormalized log target density relative to the reference
    and ``sample_weight`` as the reference probabilities.

    Parameters
    ----------
    n_samples : int
        Draws per iteration.
    max_iter : int
    tol : float
        Stop once ``max |beta_{k+1} - beta_k| <= tol``.
    z_multiplier : float, optional
        When set, the confidence-box variant is used with this multiplier.
    random_state : int or Generator, optional

    Attributes
    ----------
    beta_, beta_std_error_ : ndarray of shape (d,)
    trajectory_ : list of tuples
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, n_samples=10_000, max_iter=50, tol=1e-3, z_multiplier=None,
                 random_state=None):
        self.n_samples = n_samples
        self.max_iter = max_iter
        self.tol = tol
        self.z_multiplier = z_multiplier
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X = check_array(X, dtype=float)
        y = check_array(y, ensure_2d=False, dtype=float, ensure_all_finite=False)
        if y.shape != (X.shape[0],):
            raise ValueError("y must hold one log target value per row of X")
        pi = _reference(X, sample_weight)
        variant = "moment" if self.z_multiplier is None else "confidence"
        res = run_cross_entropy(y, pi, X, self.n_samples, max_iter=self.max_iter, tol=self.tol,
                                variant=variant, z_multiplier=self.z_multiplier or 0.0,
                                rng=self.random_state)
        self.result_ = res
        self.beta_ = res.beta
        self.beta_std_error_ = res.final.beta_std_error
        self.log_partition_ = res.final.model.log_partition
        self.trajectory_ = res.trajectory()
        self.n_iter_ = res.n_iter
        self.converged_ = res.converged
        self.n_features_in_ = X.shape[1]
        return self

    def score_samples(self, X):
        """Log density of the fitted proposal relative to the reference."""
        check_is_fitted(self, "beta_")
        X = check_array(X, dtype=float)
        return X @ self.beta_ - self.log_partition_
