"""Gibbs exponential families ``mu_beta ~ exp<beta, T> d pi`` and entropy projections.

Every computation runs on a *reference table*: the values of ``T`` on the
atoms of ``pi`` together with their log-probabilities. For a finite ``pi`` the
table is exact. For a continuous ``pi`` it is a fixed, seeded sample, so the
Newton iterations see a smooth deterministic objective (common random
numbers) and Monte Carlo error is reported next to the estimates.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._validation import check_random_state, check_stat_table, check_vector
from .entropy import kl_vectors
from .exceptions import (DegenerateTilt, InfeasibleMoment, MaxIterations,
                         MismatchedSupport, SingularHessian)
from .measures import (FiniteDistribution, SampleableModel, Statistic,
                       WeightedEnsemble, stat_table)

__all__ = [
    "ConvexMomentSet",
    "GibbsModel",
    "ReferenceTable",
    "reference_table",
    "log_partition_finite",
    "moment_map",
    "solve_linear_family",
    "solve_convex_constraint",
    "pythagorean_check",
    "first_order_residual",
]

ACTIVE_SET_TOL = 1e-6
BETA_DIVERGENCE = 1e4


@dataclass(frozen=True)
class ReferenceTable:
    """Statistic values ``(k, d)`` and log-probabilities ``(k,)`` of the reference."""

    values: np.ndarray
    log_probs: np.ndarray
    exact: bool = True

    @property
    def dimension(self):
        return self.values.shape[1]

    @property
    def size(self):
        return self.values.shape[0]

    def tilt(self, beta):
        """Log-partition and tilted probabilities at ``beta``."""
        logits = self.log_probs + self.values @ beta
        A = logsumexp(logits)
        return float(A), np.exp(logits - A)

    def moments(self, beta):
        A, w = self.tilt(beta)
        m = w @ self.values
        c = self.values - m
        return A, w, m, (c * w[:, None]).T @ c


def reference_table(pi, T, n_reference=100_000, seed=0):
    """Build the table used by all solvers.

    ``pi`` may be a :class:`FiniteDistribution`, a :class:`WeightedEnsemble`
    (its normalized weights are used) or a :class:`SampleableModel`, in which
    case ``n_reference`` points are drawn with ``seed``.
    """
    if isinstance(pi, ReferenceTable):
        return pi
    if isinstance(pi, FiniteDistribution):
        with np.errstate(divide="ignore"):
            return ReferenceTable(stat_table(pi, T), np.log(pi.probs), True)
    if isinstance(pi, WeightedEnsemble):
        lw = pi.log_weights - pi.log_normalizer()
        vals = T.evaluate(pi.points) if isinstance(T, Statistic) else check_stat_table(T, pi.size)
        return ReferenceTable(vals, lw, False)
    if isinstance(pi, SampleableModel):
        rng = check_random_state(seed)
        pts = pi.draw(rng, n_reference)
        return ReferenceTable(T.evaluate(pts), np.full(n_reference, -math.log(n_reference)), False)
    raise TypeError(f"unsupported reference type {type(pi).__name__}")


class ConvexMomentSet:
    """Closed convex set ``C`` of admissible moments in R^d.

    Build with :meth:`singleton`, :meth:`box`, :meth:`ball` or
    :meth:`halfspaces`. Membership and Euclidean projection are exact for the
    first three; halfspace intersections are projected with Dykstra's
    alternating scheme.
    """

    def __init__(self, kind, **params):
        self.kind = kind
        self.params = params
        if kind == "singleton":
            self.dimension = params["point"].size
        elif kind == "box":
            lo, hi = params["lo"], params["hi"]
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValueError("box needs lo <= hi with matching shapes")
            self.dimension = lo.size
        elif kind == "ball":
            if params["radius"] < 0:
                raise ValueError("ball radius must be nonnegative")
            self.dimension = params["center"].size
        elif kind == "halfspaces":
            self.dimension = params["normals"].shape[1]
        else:
            raise ValueError(f"unknown moment set kind {kind!r}")

    @classmethod
    def singleton(cls, point):
        return cls("singleton", point=np.atleast_1d(np.asarray(point, dtype=float)))

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=np.atleast_1d(np.asarray(lo, float)), hi=np.atleast_1d(np.asarray(hi, float)))

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=np.atleast_1d(np.asarray(center, float)), radius=float(radius))

    @classmethod
    def halfspaces(cls, normals, offsets):
        """Intersection of ``{t : <a_i, t> <= b_i}``."""
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.atleast_1d(np.asarray(offsets, dtype=float))
        if b.shape != (a.shape[0],):
            raise ValueError("one offset per normal")
        return cls("halfspaces", normals=a, offsets=b)

    def contains(self, t, tol=1e-12):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "singleton":
            return bool(np.max(np.abs(t - p["point"])) <= tol)
        if self.kind == "box":
            return bool(np.all(t >= p["lo"] - tol) and np.all(t <= p["hi"] + tol))
        if self.kind == "ball":
            return bool(np.linalg.norm(t - p["center"]) <= p["radius"] + tol)
        return bool(np.all(p["normals"] @ t <= p["offsets"] + tol))

    def project(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "singleton":
            return p["point"].copy()
        if self.kind == "box":
            return np.clip(t, p["lo"], p["hi"])
        if self.kind == "ball":
            r = np.linalg.norm(t - p["center"])
            if r <= p["radius"]:
                return t.copy()
            return p["center"] + (t - p["center"]) * (p["radius"] / r)
        return self._dykstra(t)

    def _dykstra(self, t, max_iter=5000, tol=1e-15):
        a, b = self.params["normals"], self.params["offsets"]
        x = t.copy()
        incr = np.zeros((a.shape[0], t.size))
        for _ in range(max_iter):
            x_prev = x.copy()
            for i in range(a.shape[0]):
                y = x + incr[i]
                viol = a[i] @ y - b[i]
                x = y - max(viol, 0.0) / (a[i] @ a[i]) * a[i]
                incr[i] = y - x
            if np.max(np.abs(x - x_prev)) <= tol:
                break
        return x

    def center(self):
        p = self.params
        if self.kind == "singleton":
            return p["point"]
        if self.kind == "box":
            return 0.5 * (p["lo"] + p["hi"])
        if self.kind == "ball":
            return p["center"]
        return None

    def probe(self, rng, n, around=None, scale=1.0):
        """``n`` points of ``C`` used to spot-check first-order conditions."""
        p = self.params
        d = self.dimension
        if self.kind == "singleton":
            return np.tile(p["point"], (n, 1))
        if self.kind == "box":
            return rng.uniform(p["lo"], p["hi"], size=(n, d))
        if self.kind == "ball":
            g = rng.standard_normal((n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            return p["center"] + p["radius"] * g * rng.uniform(size=(n, 1)) ** (1.0 / d)
        base = np.zeros(d) if around is None else around
        return np.array([self.project(base + scale * z) for z in rng.standard_normal((n, d))])

    def to_dict(self):
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        if kind == "singleton":
            return cls.singleton(d["point"])
        if kind == "box":
            return cls.box(d["lo"], d["hi"])
        if kind == "ball":
            return cls.ball(d["center"], d["radius"])
        if kind == "halfspaces":
            return cls.halfspaces(d["normals"], d["offsets"])
        raise ValueError(f"unknown moment set kind {kind!r}")

    def __repr__(self):
        return f"ConvexMomentSet({self.to_dict()!r})"


@dataclass
class GibbsModel:
    """Member ``mu_beta`` of the Gibbs family built on ``reference`` and ``statistic``."""

    reference: object
    statistic: object
    beta: np.ndarray
    log_partition: float
    log_partition_std_error: float = None
    table: ReferenceTable = field(default=None, repr=False)
    statistic_id: str = "T"
    reference_id: str = "pi"
    n_iter: int = 0

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if self.table is None:
            self.table = reference_table(self.reference, self.statistic)

    @property
    def exact(self):
        return self.table.exact

    def weights(self):
        """Tilted probabilities of the reference atoms (or reference sample)."""
        return self.table.tilt(self.beta)[1]

    def moment(self):
        return moment_map(self)

    def moment_std_error(self):
        """Monte Carlo s.e. of :meth:`moment`; zeros for exact references."""
        if self.exact:
            return np.zeros(self.table.dimension)
        w = self.weights()
        c = self.table.values - w @ self.table.values
        return np.sqrt((w**2) @ c**2)

    def covariance(self):
        return self.table.moments(self.beta)[3]

    def entropy_wrt_reference(self):
        """``Ent(mu_beta | pi) = <beta, mu_beta(T)> - ln Z_beta``."""
        A, w = self.table.tilt(self.beta)
        if self.exact:
            return kl_vectors(w, np.exp(self.table.log_probs))
        return float(w @ (self.table.values @ self.beta) - A)

    def to_distribution(self):
        """The tilted law as a :class:`FiniteDistribution` (finite references only)."""
        if not isinstance(self.reference, FiniteDistribution):
            raise TypeError("only finite references give a finite distribution")
        w = self.weights()
        return FiniteDistribution(self.reference.atoms, w / w.sum())

    def log_density_wrt_reference(self, t_values):
        """``ln d mu_beta / d pi`` at statistic values ``t_values``."""
        t_values = check_stat_table(t_values)
        return t_values @ self.beta - self.log_partition

    def to_dict(self):
        lp = {"value": self.log_partition}
        if self.log_partition_std_error is not None:
            lp["std_error"] = self.log_partition_std_error
        return {
            "beta": self.beta.tolist(),
            "log_partition": lp,
            "statistic_id": self.statistic_id,
            "reference_id": self.reference_id,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d, reference, statistic, **kw):
        """Rebuild from serialized fields; the reference and statistic are re-attached."""
        lp = d["log_partition"]
        return cls(reference, statistic, np.asarray(d["beta"], dtype=float), float(lp["value"]),
                   lp.get("std_error"), statistic_id=d.get("statistic_id", "T"),
                   reference_id=d.get("reference_id", "pi"), **kw)

    @classmethod
    def from_json(cls, text, reference, statistic, **kw):
        return cls.from_dict(json.loads(text), reference, statistic, **kw)


def _make_model(pi, T, table, beta, n_iter=0):
    A, w = table.tilt(beta)
    se = None
    if not table.exact:
        n = table.size
        se = float(math.sqrt(max(n * np.sum(w * w) - 1.0, 0.0) / n))
    return GibbsModel(pi, T, beta, A, se, table=table, n_iter=n_iter)


def log_partition_finite(pi, T, beta):
    """``ln sum_i pi_i exp<beta, T(i)>`` by log-sum-exp."""
    table = reference_table(pi, T)
    return table.tilt(check_vector(beta, table.dimension, "beta"))[0]


def moment_map(model):
    """``mu_beta(T)``, the gradient of the log-partition at ``beta``."""
    A, w = model.table.tilt(model.beta)
    support = np.isfinite(model.table.log_probs)
    if np.count_nonzero(support) > 1 and np.max(w) == 1.0:
        raise DegenerateTilt("tilted law collapsed onto a single atom")
    return w @ model.table.values


def _check_hull(table, t0):
    vals = table.values[np.isfinite(table.log_probs)]
    lo, hi = vals.min(axis=0), vals.max(axis=0)
    if np.any(t0 < lo) or np.any(t0 > hi):
        raise InfeasibleMoment(f"target moment {t0} lies outside the range of T")
    flat = (hi == lo)
    if np.any(flat & (t0 != lo)):
        raise InfeasibleMoment("target moment differs from a constant component of T")
    if np.any(~flat & ((t0 == lo) | (t0 == hi))):
        raise InfeasibleMoment("target moment lies on the boundary of the moment hull")


def _check_rank(table):
    cov = table.moments(np.zeros(table.dimension))[3]
    ev = np.linalg.eigvalsh(cov)
    if ev[0] <= 1e-12 * max(1.0, ev[-1]):
        raise SingularHessian("Cov(T) under the reference is rank deficient; "
                              "T has affinely dependent components")


def _polish(table, t0, beta, g, max_steps=5):
    """Full Newton steps while the gradient keeps shrinking.

    Drives the moment residual to rounding level, so warm and cold starts
    land on the same ``beta``.
    """
    for _ in range(max_steps):
        H = table.moments(beta)[3]
        try:
            cand = beta - np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        gc = table.moments(cand)[2] - t0
        if not np.max(np.abs(gc)) < np.max(np.abs(g)):
            break
        beta, g = cand, gc
    return beta


def _newton(table, t0, beta0=None, tol=1e-10, max_iter=200):
    """Damped Newton on ``A(beta) - <beta, t0>``; returns ``(beta, n_iter)``."""
    beta = np.zeros(table.dimension) if beta0 is None else np.array(beta0, dtype=float)
    A, _, m, H = table.moments(beta)
    f = A - beta @ t0
    g = m - t0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= tol:
            return _polish(table, t0, beta, g), it
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        s = 1.0
        slope = g @ step
        # slack for rounding in f, which dominates once the decrease is ~1e-16 |f|
        slack = 8 * np.finfo(float).eps * (abs(f) + abs(A) + 1.0)
        while True:
            cand = beta - s * step
            Ac, _, mc, Hc = table.moments(cand)
            fc = Ac - cand @ t0
            if fc <= f - 1e-4 * s * slope + slack or s < 1e-10:
                break
            s *= 0.5
        gc = mc - t0
        if s < 1e-10 and np.max(np.abs(gc)) >= np.max(np.abs(g)):
            if np.max(np.abs(g)) <= 100 * tol:
                return beta, it
            raise InfeasibleMoment("Newton iteration stalled; target moment is unreachable")
        beta, f, g, H, A = cand, fc, gc, Hc, Ac
        if np.max(np.abs(beta)) > BETA_DIVERGENCE:
            raise InfeasibleMoment("natural parameter diverged; target moment is outside the hull")
    if np.max(np.abs(g)) <= 100 * tol:
        return beta, max_iter
    raise MaxIterations(f"Newton did not reach tolerance {tol} in {max_iter} iterations")


def solve_linear_family(pi, T, t0, tol=1e-10, max_iter=200, beta0=None,
                        n_reference=100_000, seed=0):
    """Find ``beta`` with ``mu_beta(T) = t0``.

    Parameters
    ----------
    pi : FiniteDistribution, WeightedEnsemble, SampleableModel or ReferenceTable
    T : Statistic or array of statistic values on the atoms of ``pi``
    t0 : array-like, shape (d,)
    tol : float
        Sup-norm tolerance on the moment residual.

    Returns
    -------
    GibbsModel

    Raises
    ------
    InfeasibleMoment
        ``t0`` is outside the moment hull, or Newton diverges.
    SingularHessian
        The components of ``T`` are affinely dependent under ``pi``.
    """
    table = reference_table(pi, T, n_reference, seed)
    t0 = check_vector(t0, table.dimension, "t0")
    _check_hull(table, t0)
    _check_rank(table)
    beta, n_iter = _newton(table, t0, beta0, tol, max_iter)
    return _make_model(pi, T, table, beta, n_iter)


def solve_convex_constraint(pi, T, C, tol=1e-8, max_iter=500, newton_tol=1e-10,
                            n_reference=100_000, seed=0):
    """Entropy projection of ``pi`` onto ``{eta : eta(T) in C}``.

    Runs projected gradient descent on the convex conjugate ``A*(t)`` of the
    log-partition over ``C``; each gradient ``beta(t)`` comes from
    :func:`solve_linear_family`, warm-started from the previous iterate.
    At a fixed point ``t = Proj_C(t - beta(t))`` the first-order condition
    ``<beta, t'> >= <beta, t>`` holds for every ``t'`` in ``C``.
    Convergence is declared once that fixed-point residual drops below
    ``tol``.
    """
    table = reference_table(pi, T, n_reference, seed)
    if C.dimension != table.dimension:
        raise ValueError("moment set and statistic dimensions differ")
    m0 = table.moments(np.zeros(table.dimension))[2]
    if C.contains(m0, tol=0.0):
        return _make_model(pi, T, table, np.zeros(table.dimension))
    if C.kind == "singleton":
        return solve_linear_family(pi, T, C.params["point"], newton_tol,
                                   n_reference=n_reference, seed=seed)

    def solve(t, beta0):
        beta, _ = _newton(table, t, beta0, newton_tol)
        A = table.tilt(beta)[0]
        return beta, float(beta @ t - A)

    _check_rank(table)
    t, beta, fval = _feasible_start(table, C, m0, solve)
    step = _initial_step(table, beta)
    for it in range(1, max_iter + 1):
        resid = np.linalg.norm(t - C.project(t - beta))
        if resid <= tol:
            return _make_model(pi, T, table, beta, it)
        if resid <= ACTIVE_SET_TOL:
            polished = _active_set_finish(table, C, t, beta, newton_tol)
            if polished is not None and np.linalg.norm(
                    polished[0] - C.project(polished[0] - polished[1])) <= tol:
                return _make_model(pi, T, table, polished[1], it)
        while True:
            t_new = C.project(t - step * beta)
            dt = t_new - t
            try:
                _check_hull(table, t_new)
                beta_new, f_new = solve(t_new, beta)
            except (InfeasibleMoment, MaxIterations):
                step *= 0.5
            else:
                if f_new <= fval + beta @ dt + 0.5 / step * (dt @ dt) + 1e-15 * abs(fval):
                    break
                step *= 0.5
            if step < 1e-14:
                raise InfeasibleMoment("projected iteration cannot make progress inside the moment hull")
        db = beta_new - beta
        t, beta, fval = t_new, beta_new, f_new
        # Barzilai-Borwein step for the next iteration
        denom = dt @ db
        step = float(np.clip(dt @ dt / denom, 1e-8, 1e8)) if denom > 0 else step * 2.0
    raise MaxIterations(f"projected iteration did not converge in {max_iter} iterations")


def _polyhedral_rows(C):
    """``(a, b)`` with ``C = {t : a t <= b}`` for boxes and halfspaces, else None."""
    if C.kind == "box":
        eye = np.eye(C.dimension)
        return np.vstack([eye, -eye]), np.concatenate([C.params["hi"], -C.params["lo"]])
    if C.kind == "halfspaces":
        return C.params["normals"], C.params["offsets"]
    return None


def _active_set_finish(table, C, t, beta, newton_tol):
    """Exact solve on the face of a polyhedral ``C`` that the iterate sits on.

    With active rows ``a_A t = b_A`` the optimum is the tilt along
    ``beta = a_A^T gamma`` whose moment meets those rows, so Newton on the
    reduced statistic ``a_A T`` reaches machine precision where projected
    gradient stalls. Returns ``(t, beta)`` or None if the guess fails the
    optimality checks (multiplier signs, feasibility).
    """
    rows = _polyhedral_rows(C)
    if rows is None:
        return None
    a, b = rows
    active = np.abs(a @ t - b) <= ACTIVE_SET_TOL * (1.0 + np.abs(b))
    if not np.any(active):
        return None
    aa, ba = a[active], b[active]
    if np.linalg.matrix_rank(aa) < aa.shape[0]:
        return None
    reduced = ReferenceTable(table.values @ aa.T, table.log_probs, table.exact)
    gamma0 = np.linalg.lstsq(aa.T, beta, rcond=None)[0]
    try:
        gamma, _ = _newton(reduced, ba, gamma0, newton_tol)
    except (InfeasibleMoment, MaxIterations):
        return None
    # minimizing A*(t) subject to a t <= b needs beta = -a_A^T lambda, lambda >= 0
    if np.any(gamma > 1e-12):
        return None
    beta_new = aa.T @ gamma
    t_new = table.moments(beta_new)[2]
    if not C.contains(t_new, tol=1e-12):
        return None
    return t_new, beta_new


def _initial_step(table, beta):
    cov = table.moments(beta)[3]
    return float(max(np.linalg.eigvalsh(cov)[0], 1e-8))


def _feasible_start(table, C, m0, solve):
    """First point on the segment from ``Proj_C(m0)`` toward the centre of ``C``
    that sits strictly inside the moment hull."""
    c = C.center()
    targets = [m0] if c is None else [(1 - s) * m0 + s * c for s in np.linspace(0.0, 1.0, 21)]
    for target in targets:
        t = C.project(target)
        try:
            _check_hull(table, t)
            beta, f = solve(t, None)
        except (InfeasibleMoment, MaxIterations):
            continue
        return t, beta, f
    raise InfeasibleMoment("no point of C found strictly inside the moment hull of T under pi")


def first_order_residual(model, C, n_probe=1000, rng=None):
    """Smallest ``<beta, t> - <beta, mu_beta(T)>`` over ``n_probe`` points of ``C``.

    Nonnegative (up to solver tolerance) exactly at the entropy projection.
    """
    rng = check_random_state(0 if rng is None else rng)
    m = moment_map(model)
    probes = C.probe(rng, n_probe, around=m, scale=1.0)
    return float(np.min(probes @ model.beta - m @ model.beta))


def pythagorean_check(eta, mu_star, pi):
    """``Ent(eta|pi) - Ent(eta|mu_star) - Ent(mu_star|pi)`` on a finite space.

    Nonnegative for admissible ``eta``; zero for linear families.
    """
    if isinstance(mu_star, GibbsModel):
        mu_star = mu_star.to_distribution()
    if set(mu_star.atoms) != set(pi.atoms):
        raise MismatchedSupport("mu_star and pi live on different atoms")
    p_eta = eta.aligned_to(pi)
    p_mu = mu_star.aligned_to(pi)
    return (kl_vectors(p_eta, pi.probs) - kl_vectors(p_eta, p_mu)
            - kl_vectors(p_mu, pi.probs))
