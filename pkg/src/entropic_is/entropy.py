"""Relative entropy and Renyi entropies, exact on finite spaces and by Monte Carlo.

Renyi orders follow the usual indexing: order ``a`` is
``(1/(a-1)) ln sum_i eta_i (eta_i/mu_i)^(a-1)``, so order 1 is the
Kullback-Leibler divergence, order 2 gives ``ln E[Y^2]`` for the likelihood
ratio ``Y = d eta / d mu`` under ``mu``, and orders ``1 +/- theta`` are the
pair used by the sample-size bounds. Endpoint conventions:

* order 0: ``-ln mu(supp eta)``
* order inf: ``ln max (eta/mu)`` over ``supp eta``

Whenever ``eta`` is not dominated by ``mu`` every order is ``+inf``, including
orders below one.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import MismatchedSupport

__all__ = [
    "EntropyReport",
    "relative_entropy_finite",
    "renyi_entropy_finite",
    "renyi_profile_finite",
    "log_likelihood_variance_finite",
    "entropy_report_finite",
    "relative_entropy_mc",
    "entropy_report_mc",
    "variance_from_renyi2",
    "chain_rule_decompose",
    "kl_vectors",
    "renyi_vectors",
    "DEFAULT_ORDERS",
]

DEFAULT_ORDERS = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, math.inf)
_CLAMP = 1e-14


def _log_ratio(p, q):
    """Log-likelihood ratio on ``supp p``; ``None`` when ``p`` is not dominated by ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise MismatchedSupport("probability vectors differ in length")
    s = p > 0
    if np.any(q[s] <= 0):
        return None, s
    return np.log(p[s]) - np.log(q[s]), s


def kl_vectors(p, q):
    """KL divergence between probability vectors, with 0 ln 0 = 0."""
    llr, s = _log_ratio(p, q)
    if llr is None:
        return math.inf
    val = float(np.dot(np.asarray(p)[s], llr))
    if -_CLAMP < val < 0:
        return 0.0
    return val


def _log_moment(w, llr, x):
    """``ln sum w exp(x*llr)``, accurate when ``x*llr`` is small."""
    xl = x * llr
    if np.max(np.abs(xl)) < 0.5:
        return math.log1p(float(np.dot(w, np.expm1(xl))))
    return float(logsumexp(xl, b=w))


def renyi_vectors(p, q, order):
    if order < 0:
        raise ValueError("Renyi order must be nonnegative")
    llr, s = _log_ratio(p, q)
    if llr is None:
        return math.inf
    p = np.asarray(p, dtype=float)[s]
    if order == 1:
        val = float(np.dot(p, llr))
        return 0.0 if -_CLAMP < val < 0 else val
    if math.isinf(order):
        return float(np.max(llr))
    if order == 0:
        return 0.0 - math.log(float(np.sum(np.asarray(q, dtype=float)[s]))) + 0.0
    return _log_moment(p, llr, order - 1.0) / (order - 1.0)


def relative_entropy_finite(eta, mu):
    """``Ent(eta | mu)`` in nats; ``+inf`` when ``eta`` is not dominated by ``mu``."""
    return kl_vectors(eta.aligned_to(mu), mu.probs)


def renyi_entropy_finite(eta, mu, alpha):
    """Renyi entropy of order ``alpha`` of ``eta`` relative to ``mu``."""
    return renyi_vectors(eta.aligned_to(mu), mu.probs, float(alpha))


def renyi_profile_finite(eta, mu, orders=DEFAULT_ORDERS):
    p = eta.aligned_to(mu)
    return {float(a): renyi_vectors(p, mu.probs, float(a)) for a in orders}


def log_likelihood_variance_finite(eta, mu):
    """``Var_eta ln(eta/mu)``; ``+inf`` without domination."""
    p = eta.aligned_to(mu)
    llr, s = _log_ratio(p, mu.probs)
    if llr is None:
        return math.inf
    w = p[s]
    m = np.dot(w, llr)
    return float(np.dot(w, (llr - m) ** 2))


def variance_from_renyi2(ent2):
    """Variance of the unit-mean likelihood ratio, ``exp(Ent_2) - 1``."""
    return math.expm1(ent2)


def _num(x):
    """JSON-safe float: infinities become the strings ``"inf"`` / ``"-inf"``."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class EntropyReport:
    """Entropy summary of one (target, proposal) pair."""

    kl: float
    renyi: dict = field(default_factory=dict)
    log_likelihood_variance: float = 0.0
    estimator_kind: str = "exact"
    n: int = None
    std_error: float = None

    def to_dict(self):
        est = {"kind": self.estimator_kind}
        if self.estimator_kind == "monte_carlo":
            est.update(n=self.n, std_error=self.std_error)
        return {
            "kl": _num(self.kl),
            "renyi": [[_num(a), _num(v)] for a, v in sorted(self.renyi.items())],
            "log_likelihood_variance": _num(self.log_likelihood_variance),
            "estimator": est,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), allow_nan=False, **kw)

    @classmethod
    def from_dict(cls, d):
        est = d["estimator"]
        return cls(
            kl=float(d["kl"]),
            renyi={float(a): float(v) for a, v in d["renyi"]},
            log_likelihood_variance=float(d["log_likelihood_variance"]),
            estimator_kind=est["kind"],
            n=est.get("n"),
            std_error=est.get("std_error"),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def entropy_report_finite(eta, mu, orders=DEFAULT_ORDERS):
    return EntropyReport(
        kl=relative_entropy_finite(eta, mu),
        renyi=renyi_profile_finite(eta, mu, orders),
        log_likelihood_variance=log_likelihood_variance_finite(eta, mu),
    )


def _as_logdens(d):
    return d.log_density if hasattr(d, "log_density") else d


def _jackknife(values, w, block):
    """Delete-one-block jackknife s.e. of the self-normalized mean ``sum w v / sum w``."""
    n = values.size
    n_blocks = n // block
    if n_blocks < 2:
        return math.nan
    idx = np.arange(n_blocks * block).reshape(n_blocks, block)
    wb = w[idx].sum(axis=1)
    vb = (w[idx] * values[idx]).sum(axis=1)
    # leftover points never leave the sample
    w_tot = w.sum()
    v_tot = (w * values).sum()
    loo = (v_tot - vb) / (w_tot - wb)
    return float(np.sqrt((n_blocks - 1) / n_blocks * np.sum((loo - loo.mean()) ** 2)))


def relative_entropy_mc(eta_logdens, mu_logdens, draws, eta_log_norm=0.0, mu_log_norm=0.0,
                        block=100):
    """Monte Carlo ``Ent(eta | mu)`` from a weighted ensemble drawn from ``eta``.

    Parameters
    ----------
    eta_logdens, mu_logdens : callable or SampleableModel
        Log-densities against a common reference, evaluated on ``(N, d)``
        arrays. They must be normalized, or the caller passes the log
        normalizers ``eta_log_norm`` / ``mu_log_norm`` to subtract.
    draws : WeightedEnsemble
        Sample targeting ``eta`` (plain i.i.d. draws have zero log-weights).
    block : int
        Block length of the delete-one-block jackknife.

    Returns
    -------
    estimate, std_error : float
    """
    w = draws.normalized_weights()
    llr = ((_as_logdens(eta_logdens)(draws.points) - eta_log_norm)
           - (_as_logdens(mu_logdens)(draws.points) - mu_log_norm))
    keep = w > 0
    if np.any(np.isinf(llr[keep]) & (llr[keep] > 0)):
        return math.inf, math.nan
    est = float(np.dot(w[keep], llr[keep]))
    return est, _jackknife(np.where(keep, llr, 0.0), w, block)


def entropy_report_mc(eta_logdens, mu_logdens, draws, orders=DEFAULT_ORDERS,
                      eta_log_norm=0.0, mu_log_norm=0.0, block=100):
    """Monte Carlo :class:`EntropyReport`; Renyi orders are plug-in estimates."""
    kl, se = relative_entropy_mc(eta_logdens, mu_logdens, draws, eta_log_norm, mu_log_norm, block)
    w = draws.normalized_weights()
    llr = ((_as_logdens(eta_logdens)(draws.points) - eta_log_norm)
           - (_as_logdens(mu_logdens)(draws.points) - mu_log_norm))
    keep = w > 0
    w, llr = w[keep], llr[keep]
    renyi = {}
    for a in orders:
        a = float(a)
        if a == 1.0:
            renyi[a] = kl
        elif math.isinf(a):
            renyi[a] = float(np.max(llr))
        elif a == 0.0:
            # mu(supp eta) = E_eta[mu/eta]
            renyi[a] = -float(logsumexp(-llr, b=w))
        else:
            renyi[a] = _log_moment(w, llr, a - 1.0) / (a - 1.0)
    var = float(np.dot(w, (llr - np.dot(w, llr)) ** 2))
    return EntropyReport(kl, renyi, var, "monte_carlo", draws.size, se)


def _grouping(joint, T):
    if callable(T):
        return [T(a) for a in joint.atoms]
    return [a[T] for a in joint.atoms]


def chain_rule_decompose(joint_eta, joint_pi, T):
    """Split ``Ent(eta | pi)`` along the map ``T``.

    Parameters
    ----------
    joint_eta, joint_pi : FiniteDistribution
        Distributions on the same product grid.
    T : int or callable
        Coordinate index into tuple atoms, or any map from atom to key.

    Returns
    -------
    marginal_term : float
        ``Ent(T#eta | T#pi)``.
    conditional_term : float
        ``sum_t T#eta(t) Ent(eta(.|t) | pi(.|t))``.
    """
    p = joint_eta.aligned_to(joint_pi)
    q = joint_pi.probs
    keys = _grouping(joint_pi, T)
    labels = list(dict.fromkeys(keys))
    pos = {k: i for i, k in enumerate(labels)}
    g = np.array([pos[k] for k in keys])
    pm = np.bincount(g, weights=p, minlength=len(labels))
    qm = np.bincount(g, weights=q, minlength=len(labels))
    marginal = kl_vectors(pm, qm)
    conditional = 0.0
    for i in range(len(labels)):
        if pm[i] == 0:
            continue
        sel = g == i
        if qm[i] == 0:
            return marginal, math.inf
        conditional += pm[i] * kl_vectors(p[sel] / pm[i], q[sel] / qm[i])
    return marginal, float(conditional)
