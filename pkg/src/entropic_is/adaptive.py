"""Cross-entropy adaptive importance sampling with Gibbs proposals.

Each iteration samples the current proposal ``mu_beta``, reweights towards
the target, and refits ``beta`` so that the proposal reproduces the weighted
moments of ``T``. The refit is also the entropy projection of the reference
onto ``{eta : eta(T) = moment}``, so the moment-matched proposal is the
worst-case optimal one for that constraint. The confidence variant replaces
the single moment by a bootstrap box around it.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_random_state, check_vector
from .exceptions import InfeasibleMoment, WeightDegeneracyWarning
from .gibbs import (ConvexMomentSet, GibbsModel, reference_table, solve_convex_constraint,
                    solve_linear_family)
from .measures import CategoricalModel, FiniteDistribution, Statistic, WeightedEnsemble
from .smc import SmcConfig, run_smc

__all__ = [
    "CrossEntropyState",
    "CrossEntropyResult",
    "ConfidenceMomentSet",
    "initial_state",
    "ce_step",
    "ce_step_confidence",
    "run_cross_entropy",
]

ESS_FLOOR = 10.0


@dataclass
class CrossEntropyState:
    """One iterate of the adaptive loop.

    ``ensemble`` holds the draws from the previous proposal weighted towards
    the target; ``moment`` is their weighted mean of ``T`` and ``beta`` the
    parameter fitted to it.
    """

    iteration: int
    beta: np.ndarray
    model: GibbsModel = field(default=None, repr=False)
    ensemble: WeightedEnsemble = field(default=None, repr=False)
    moment: np.ndarray = None
    moment_std_error: np.ndarray = None
    beta_std_error: np.ndarray = None
    ess: float = math.nan
    trust_region_steps: int = 0


@dataclass
class ConfidenceMomentSet:
    """Box ``center +/- z * se`` built from bootstrap standard errors."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, float))
        self.radius = np.broadcast_to(np.asarray(self.radius, float), self.center.shape).copy()
        if np.any(self.radius < 0):
            raise ValueError("radius entries must be nonnegative")

    @classmethod
    def from_ensemble(cls, tvals, weights, z_multiplier=3.0, n_bootstrap=200, rng=None):
        rng = check_random_state(rng)
        w = weights / weights.sum()
        center = w @ tvals
        n = w.size
        boots = np.empty((n_bootstrap, tvals.shape[1]))
        for b in range(n_bootstrap):
            idx = rng.integers(0, n, size=n)
            wb = w[idx]
            boots[b] = wb @ tvals[idx] / wb.sum()
        return cls(center, z_multiplier * boots.std(axis=0, ddof=1))

    def as_convex_set(self):
        if not np.any(self.radius > 0):
            return ConvexMomentSet.singleton(self.center)
        return ConvexMomentSet.box(self.center - self.radius, self.center + self.radius)


def _is_finite(pi):
    return isinstance(pi, (FiniteDistribution, CategoricalModel))


def _finite_pieces(pi, T):
    """Reference atoms as points, plus the statistic table."""
    if isinstance(pi, CategoricalModel):
        points = pi.values
        dist = FiniteDistribution.from_probs(pi.probs)
    else:
        dist = pi
        points = np.asarray(pi.atoms, dtype=float).reshape(len(pi), -1)
    if isinstance(T, Statistic):
        table = T.evaluate(points)
    else:
        table = np.asarray(T, dtype=float).reshape(len(dist), -1)
    return dist, points, table


def initial_state(pi, T, beta0=None, n_reference=100_000, seed=0):
    """Iteration-zero state at ``beta0`` (default: the reference itself)."""
    if _is_finite(pi):
        dist, _, table = _finite_pieces(pi, T)
        tab = reference_table(dist, table)
        ref = dist
    else:
        tab = reference_table(pi, T, n_reference, seed)
        ref = pi
    beta = np.zeros(tab.dimension) if beta0 is None else check_vector(beta0, tab.dimension, "beta0")
    A = tab.tilt(beta)[0]
    model = GibbsModel(ref, T, beta, A, table=tab)
    return CrossEntropyState(0, beta, model)


def _draw(state, target_logdensity, pi, T, n, rng, smc_config):
    """Weighted draws of the target through the current proposal.

    Returns points, statistic values and log-weights.
    """
    beta = state.beta
    if _is_finite(pi):
        dist, points, table = _finite_pieces(pi, T)
        probs = state.model.weights()
        idx = rng.choice(probs.size, size=n, p=probs / probs.sum())
        x, t = points[idx], table[idx]
        if callable(target_logdensity):
            lt = np.asarray(target_logdensity(x), dtype=float)
        else:
            lt = np.asarray(target_logdensity, dtype=float)[idx]
        # the log-partition cancels after self-normalization but keeps weights O(1)
        logw = lt - t @ beta + state.model.log_partition
        return x, t, logw
    cfg = smc_config or SmcConfig(particle_count=n)
    if cfg.particle_count != n:
        cfg = SmcConfig(**{**vars(cfg), "particle_count": n})
    res = run_smc(pi, T, beta, cfg, rng)
    x = res.ensemble.points
    t = T.evaluate(x)
    logw = res.ensemble.log_weights + np.asarray(target_logdensity(x), float) - t @ beta + res.log_z_estimate
    return x, t, logw


def _weighted(x, t, logw):
    ens = WeightedEnsemble(x, logw)
    w = ens.normalized_weights()
    ess = ens.effective_sample_size()
    if ess < ESS_FLOOR:
        warnings.warn(f"effective sample size {ess:.3g} is below {ESS_FLOOR:g}",
                      WeightDegeneracyWarning, stacklevel=3)
    anchor = t[np.argmax(w)]
    moment = anchor + w @ (t - anchor)
    c = t - moment
    v = (c * (w**2)[:, None]).T @ c
    return ens, w, moment, v, ess


def _beta_se(model, v):
    """Delta-method s.e. of ``beta`` from the moment covariance ``v``."""
    cov = model.covariance()
    try:
        j = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        return np.full(cov.shape[0], math.nan)
    return np.sqrt(np.clip(np.diag(j @ v @ j), 0.0, None))


def _reference_and_table(pi, T):
    if _is_finite(pi):
        dist, _, table = _finite_pieces(pi, T)
        return dist, table
    return pi, T


def _fit_moment(state, pi, T, moment, trust_fraction, n_reference, seed):
    ref, stat = _reference_and_table(pi, T)
    try:
        return solve_linear_family(ref, stat, moment, beta0=state.beta,
                                   n_reference=n_reference, seed=seed), 0
    except InfeasibleMoment:
        pass
    # shrink the step towards the current proposal moment until it is attainable
    current = state.model.moment()
    frac = trust_fraction
    for steps in range(1, 40):
        target = current + frac * (moment - current)
        try:
            return solve_linear_family(ref, stat, target, beta0=state.beta,
                                       n_reference=n_reference, seed=seed), steps
        except InfeasibleMoment:
            frac *= trust_fraction
    raise InfeasibleMoment("no attainable moment found along the trust-region path")


def ce_step(state, target_logdensity, pi, T, n, rng=None, trust_fraction=0.5,
            smc_config=None, n_reference=100_000, seed=0):
    """One cross-entropy iteration: sample, reweight, match moments.

    Parameters
    ----------
    state : CrossEntropyState
    target_logdensity : callable or array
        Unnormalized ``ln d eta / d pi``. On finite references an array of
        per-atom values is accepted.
    pi : FiniteDistribution, CategoricalModel or SampleableModel
    T : Statistic, or a ``(k, d)`` table for finite references
    n : int
        Draws per iteration.
    trust_fraction : float
        Shrink factor used only when the raw moment is outside the
        attainable hull.

    Returns
    -------
    CrossEntropyState
    """
    rng = check_random_state(rng)
    x, t, logw = _draw(state, target_logdensity, pi, T, n, rng, smc_config)
    ens, w, moment, v, ess = _weighted(x, t, logw)
    model, steps = _fit_moment(state, pi, T, moment, trust_fraction, n_reference, seed)
    return CrossEntropyState(state.iteration + 1, model.beta, model, ens, moment,
                             np.sqrt(np.diag(v)), _beta_se(model, v), ess, steps)


def ce_step_confidence(state, target_logdensity, pi, T, n, rng=None, z_multiplier=3.0,
                       n_bootstrap=200, smc_config=None, n_reference=100_000, seed=0):
    """Cross-entropy iteration that projects onto a bootstrap confidence box.

    With ``z_multiplier = 0`` this reduces to :func:`ce_step` (without the
    trust-region fallback); with a box wide enough to contain ``pi(T)`` the
    proposal falls back to the reference (``beta = 0``).
    """
    rng = check_random_state(rng)
    x, t, logw = _draw(state, target_logdensity, pi, T, n, rng, smc_config)
    ens, w, moment, v, ess = _weighted(x, t, logw)
    cset = ConfidenceMomentSet.from_ensemble(t, w, z_multiplier, n_bootstrap, rng)
    ref, stat = _reference_and_table(pi, T)
    model = solve_convex_constraint(ref, stat, cset.as_convex_set(),
                                    n_reference=n_reference, seed=seed)
    return CrossEntropyState(state.iteration + 1, model.beta, model, ens, moment,
                             np.sqrt(np.diag(v)), _beta_se(model, v), ess, 0)


@dataclass
class CrossEntropyResult:
    states: list
    converged: bool

    @property
    def final(self):
        return self.states[-1]

    @property
    def beta(self):
        return self.final.beta

    @property
    def n_iter(self):
        return self.final.iteration

    def trajectory(self):
        """Rows ``(k, beta..., ess, moment...)`` of iterations ``1..K``."""
        return [(s.iteration, *s.beta, s.ess, *s.moment) for s in self.states[1:]]

    def trajectory_to_csv(self, path, fmt="%.12g"):
        d = self.final.beta.size
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["k"] + [f"beta_{j}" for j in range(d)] + ["ess"]
                       + [f"moment_{j}" for j in range(d)])
            for row in self.trajectory():
                w.writerow([row[0]] + [fmt % v for v in row[1:]])

    def to_dict(self):
        s = self.final
        return {
            "n_iter": self.n_iter,
            "converged": self.converged,
            "beta": s.beta.tolist(),
            "beta_std_error": None if s.beta_std_error is None else s.beta_std_error.tolist(),
            "final_model": s.model.to_dict(),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def run_cross_entropy(target_logdensity, pi, T, n, beta0=None, max_iter=50, tol=1e-3,
                      variant="moment", z_multiplier=3.0, rng=None, smc_config=None,
                      n_reference=100_000, seed=0):
    """Iterate cross-entropy steps until ``max |beta_{k+1} - beta_k| <= tol``.

    ``variant`` is ``"moment"`` (:func:`ce_step`) or ``"confidence"``
    (:func:`ce_step_confidence`).
    """
    if variant not in ("moment", "confidence"):
        raise ValueError("variant must be 'moment' or 'confidence'")
    rng = check_random_state(rng)
    state = initial_state(pi, T, beta0, n_reference, seed)
    states = [state]
    converged = False
    for _ in range(max_iter):
        if variant == "moment":
            new = ce_step(state, target_logdensity, pi, T, n, rng, smc_config=smc_config,
                          n_reference=n_reference, seed=seed)
        else:
            new = ce_step_confidence(state, target_logdensity, pi, T, n, rng, z_multiplier,
                                     smc_config=smc_config, n_reference=n_reference, seed=seed)
        states.append(new)
        done = np.max(np.abs(new.beta - state.beta)) <= tol
        state = new
        if done:
            converged = True
            break
    return CrossEntropyResult(states, converged)
