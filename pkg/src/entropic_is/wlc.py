"""Worst-case log-cost of a proposal and its minimizers.

``WLC_h(mu | pi) = sup { Ent(eta | mu) : eta admissible, Ent(eta | pi) <= h } - h``.

Finite spaces get an exact treatment for two atoms and a brute-force simplex
oracle for up to four atoms. On the unit square with uniform reference the
adversarial strip targets are built by tensor quadrature.
"""

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .entropy import kl_vectors
from .exceptions import DegenerateReference, DomainError, EmptyFeasibleSet, QuadratureFailure
from .measures import FiniteDistribution, Statistic, stat_table

__all__ = [
    "WlcProblem",
    "WlcSolution",
    "StripTarget",
    "LowerBoundCheck",
    "wlc_value_grid",
    "wlc_argmin_grid",
    "two_atom_argmin",
    "two_atom_feasible_interval",
    "two_atom_wlc_value",
    "two_atom_minimax",
    "regime_label",
    "wlc_sweep",
    "decomposition_residual",
    "build_strip_target",
    "proposal_lower_bound_check",
]

_FEAS_TOL = 1e-12
_BISECT_STEPS = 60


def _kl_rows(P, q):
    """``Ent(P_i | q)`` for each row of ``P``."""
    P = np.atleast_2d(P)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * (np.log(P) - np.log(q)), 0.0)
    out = terms.sum(axis=1)
    bad = np.any((P > 0) & (q <= 0), axis=1)
    out[bad] = np.inf
    return out


def _neg_entropy_rows(P):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(P > 0, P * np.log(P), 0.0).sum(axis=1)


def simplex_lattice(k, resolution):
    """All points of the ``k``-simplex with coordinates in ``{0, 1/R, ..., 1}``."""
    pts = []
    for bars in itertools.combinations(range(resolution + k - 1), k - 1):
        cuts = (-1,) + bars + (resolution + k - 1,)
        pts.append([cuts[i + 1] - cuts[i] - 1 for i in range(k)])
    return np.asarray(pts, dtype=float) / resolution


def _local_lattice(center, step, radius=4):
    k = center.size
    offs = np.array(list(itertools.product(range(-radius, radius + 1), repeat=k - 1)), dtype=float)
    offs = np.column_stack([offs, -offs.sum(axis=1)])
    pts = center + step * offs
    pts = pts[np.all(pts >= -1e-15, axis=1)]
    pts = np.clip(pts, 0.0, None)
    return pts / pts.sum(axis=1, keepdims=True)


@dataclass
class WlcProblem:
    """Reference, admissible class and entropy budget.

    Parameters
    ----------
    reference : FiniteDistribution
    h : float
        Entropy budget in nats, at least ``h_star``.
    statistic, moment_set : optional
        When given, admissible targets satisfy ``eta(T) in moment_set``.
        Otherwise every distribution is admissible.
    """

    reference: FiniteDistribution
    h: float
    statistic: object = None
    moment_set: object = None
    _mu_star: FiniteDistribution = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.h < 0:
            raise DomainError("entropy budget h must be nonnegative")
        if (self.statistic is None) != (self.moment_set is None):
            raise ValueError("statistic and moment_set go together")

    @property
    def table(self):
        return None if self.statistic is None else stat_table(self.reference, self.statistic)

    @property
    def mu_star(self):
        """Entropy minimizer of the admissible class."""
        if self._mu_star is None:
            if self.moment_set is None:
                self._mu_star = self.reference
            else:
                from .gibbs import solve_convex_constraint
                model = solve_convex_constraint(self.reference, self.table, self.moment_set)
                self._mu_star = model.to_distribution()
        return self._mu_star

    @property
    def h_star(self):
        return kl_vectors(self.mu_star.aligned_to(self.reference), self.reference.probs)

    def with_h(self, h):
        out = WlcProblem(self.reference, h, self.statistic, self.moment_set)
        out._mu_star = self._mu_star
        return out

    def admissible_rows(self, P):
        """Boolean mask of rows of ``P`` whose moments lie in the admissible set."""
        if self.moment_set is None:
            return np.ones(P.shape[0], dtype=bool)
        m = P @ self.table
        C = self.moment_set
        p = C.params
        tol = 1e-12
        if C.kind == "box":
            return np.all((m >= p["lo"] - tol) & (m <= p["hi"] + tol), axis=1)
        if C.kind == "ball":
            return np.linalg.norm(m - p["center"], axis=1) <= p["radius"] + tol
        if C.kind == "singleton":
            return np.max(np.abs(m - p["point"]), axis=1) <= 1e-9
        return np.array([C.contains(t, tol) for t in m])


@dataclass
class WlcSolution:
    """A proposal, its worst-case log-cost and the worst target found."""

    proposal: FiniteDistribution
    wlc_value: float
    worst_target: FiniteDistribution
    method: str = "grid_oracle"
    h: float = None

    def to_dict(self):
        return {
            "atoms": list(self.proposal.atoms),
            "proposal": self.proposal.probs.tolist(),
            "wlc_value": self.wlc_value,
            "worst_target": self.worst_target.aligned_to(self.proposal).tolist(),
            "method": self.method,
            "h": self.h,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        atoms = tuple(tuple(a) if isinstance(a, list) else a for a in d["atoms"])
        return cls(FiniteDistribution(atoms, d["proposal"]), float(d["wlc_value"]),
                   FiniteDistribution(atoms, d["worst_target"]), d["method"], d.get("h"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _boundary_points(problem, directions):
    """Furthest admissible point with ``Ent <= h`` on each ray from ``mu_star``.

    The feasible region is convex and contains ``mu_star``, so its
    intersection with a ray is a segment and bisection finds the far end.
    """
    pi = problem.reference.probs
    m = problem.mu_star.aligned_to(problem.reference)
    D = directions - m

    def feasible(s):
        P = m + s[:, None] * D
        P = np.clip(P, 0.0, None)
        return (_kl_rows(P, pi) <= problem.h + _FEAS_TOL) & problem.admissible_rows(P)

    lo = np.zeros(len(D))
    hi = np.ones(len(D))
    done = feasible(hi)
    lo[done] = 1.0
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        ok = feasible(mid)
        lo = np.where(ok | done, np.where(done, lo, mid), lo)
        hi = np.where(ok | done, hi, mid)
    P = np.clip(m + lo[:, None] * D, 0.0, None)
    return P / P.sum(axis=1, keepdims=True)


def _check_budget(problem):
    if problem.h < problem.h_star - 1e-12:
        raise EmptyFeasibleSet(f"h={problem.h} is below h_star={problem.h_star:.6g}")


def _candidate_set(problem, resolution):
    k = len(problem.reference)
    if k > 4:
        raise ValueError("the grid oracle handles at most 4 atoms")
    dirs = simplex_lattice(k, resolution)
    P = _boundary_points(problem, dirs)
    return dirs, P


def wlc_value_grid(problem, mu, grid_resolution=60, tol=1e-5, max_rounds=30):
    """Brute-force ``WLC_h(mu | pi)`` on a finite space of at most four atoms.

    Parameters
    ----------
    problem : WlcProblem
    mu : FiniteDistribution
    grid_resolution : int
        Denominator of the simplex lattice of ray directions.

    Returns
    -------
    value : float
        ``sup Ent(eta | mu) - h``.
    worst_target : FiniteDistribution

    Notes
    -----
    ``Ent(. | mu)`` is convex, so along each ray from ``mu_star`` it peaks at
    the boundary of the feasible set. The best ray is refined on finer local
    lattices until the value moves by less than ``tol``.
    """
    _check_budget(problem)
    q = mu.aligned_to(problem.reference)
    if problem.h <= problem.h_star + _FEAS_TOL:
        # strict convexity leaves mu_star as the only feasible target
        m = problem.mu_star.aligned_to(problem.reference)
        return float(kl_vectors(m, q) - problem.h), problem.mu_star
    dirs, P = _candidate_set(problem, grid_resolution)
    vals = _kl_rows(P, q)
    i = int(np.argmax(vals))
    best, best_p, g = vals[i], P[i], dirs[i]
    step = 1.0 / grid_resolution
    for _ in range(max_rounds):
        step /= 4.0
        local = _local_lattice(g, step)
        Pl = _boundary_points(problem, local)
        vl = _kl_rows(Pl, q)
        j = int(np.argmax(vl))
        gain = vl[j] - best
        if gain > 0:
            best, best_p, g = vl[j], Pl[j], local[j]
        if gain < tol or step < 1e-12:
            break
    atoms = problem.reference.atoms
    return float(best - problem.h), FiniteDistribution(atoms, best_p / best_p.sum())


def wlc_argmin_grid(problem, proposal_grid_resolution=200, target_resolution=120,
                    max_rounds=40):
    """Minimize the worst-case log-cost over proposals on 2 or 3 atoms.

    The admissible targets' boundary is sampled once; every proposal on a
    simplex lattice is scored against that sample and the best one is
    refined locally. The returned value and worst target come from a final
    :func:`wlc_value_grid` evaluation.
    """
    k = len(problem.reference)
    if k not in (2, 3):
        raise ValueError("wlc_argmin_grid handles 2 or 3 atoms")
    _check_budget(problem)
    _, P = _candidate_set(problem, target_resolution if k > 2 else 1)
    P = np.unique(np.round(P, 15), axis=0)
    negh = _neg_entropy_rows(P)

    def score(Q):
        with np.errstate(divide="ignore"):
            logq = np.log(Q)
        chunk = max(1, 2_000_000 // P.size)
        out = np.empty(len(Q))
        for s in range(0, len(Q), chunk):
            # proposals are strictly positive, so log q is finite
            cross = logq[s:s + chunk] @ P.T
            out[s:s + chunk] = np.max(negh[None, :] - cross, axis=1)
        return out

    grid = simplex_lattice(k, proposal_grid_resolution)
    grid = grid[np.all(grid > 0, axis=1)]
    s = score(grid)
    i = int(np.argmin(s))
    best, mu = s[i], grid[i]
    step = 1.0 / proposal_grid_resolution
    for _ in range(max_rounds):
        step /= 4.0
        local = _local_lattice(mu, step)
        local = local[np.all(local > 0, axis=1)]
        sl = score(local)
        j = int(np.argmin(sl))
        if sl[j] < best:
            best, mu = sl[j], local[j]
        if step < 1e-12:
            break
    proposal = FiniteDistribution(problem.reference.atoms, mu / mu.sum())
    value, worst = wlc_value_grid(problem, proposal, grid_resolution=max(target_resolution // 2, 8))
    return WlcSolution(proposal, value, worst, "grid_oracle", problem.h)


# -- two atoms -----------------------------------------------------------------

def _binary_kl(x, p):
    return kl_vectors(np.array([x, 1.0 - x]), np.array([p, 1.0 - p]))


def _bisect(fun, lo, hi, tol=1e-12):
    """Root of an increasing-or-decreasing ``fun`` on ``[lo, hi]`` with a sign change."""
    flo = fun(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _check_two_atoms(pi):
    if len(pi) != 2:
        raise ValueError("two-atom routines need a distribution on exactly two atoms")
    if pi.probs.min() <= 0:
        raise DegenerateReference("both atoms must carry positive reference mass")


def two_atom_feasible_interval(pi, h):
    """Range ``[a, b]`` of ``eta(first atom)`` with ``Ent(eta | pi) <= h``."""
    _check_two_atoms(pi)
    p = float(pi.probs[0])
    g = lambda x: _binary_kl(x, p) - h
    a = 0.0 if g(0.0) <= 0 else _bisect(g, 0.0, p)
    b = 1.0 if g(1.0) <= 0 else _bisect(g, p, 1.0)
    return a, b


def two_atom_wlc_value(pi, mu, h):
    """Exact ``WLC_h(mu | pi)`` with every distribution admissible.

    Returns the value and the maximizing endpoint of the feasible interval.
    """
    a, b = two_atom_feasible_interval(pi, h)
    q = mu.aligned_to(pi)
    ends = [np.array([a, 1.0 - a]), np.array([b, 1.0 - b])]
    vals = [kl_vectors(e, q) for e in ends]
    j = int(np.argmax(vals))
    return vals[j] - h, FiniteDistribution(pi.atoms, ends[j])


def _pi_h(p1, h):
    """``eta(1)`` on the branch ``[0, p1]`` with ``Ent(eta | pi) = h``."""
    return _bisect(lambda x: _binary_kl(x, p1) - h, 0.0, p1)


def two_atom_argmin(pi, h):
    """Piecewise proposal for two atoms: ``pi``, then ``pi_h``, then uniform.

    With ``pi(1) >= pi(2)`` (atoms are relabelled otherwise) the proposal is
    ``pi`` for ``h <= -ln pi(1)``, uniform for ``h >= -ln pi(2)``, and in
    between the distribution ``pi_h`` on the branch ``eta(1) in [0, pi(1)]``
    with ``Ent(pi_h | pi) = h``, located by bisection to ``1e-12``.

    The outer branches are exact. The middle branch is the stated rule, not
    the minimizer. At ``pi = (0.7, 0.3)`` and ``h = 0.7`` it gives
    ``mu(1) = 0.1327`` with cost 1.3195. :func:`two_atom_minimax` gives
    ``mu(1) = 0.6110`` with cost -0.2073, and the grid search agrees with
    the latter.
    """
    _check_two_atoms(pi)
    if h < 0:
        raise DomainError("h must be nonnegative")
    flip = pi.probs[0] < pi.probs[1]
    p1 = float(max(pi.probs))
    if h <= -math.log(p1):
        q = pi.probs.copy()
    elif h >= -math.log(1.0 - p1):
        q = np.array([0.5, 0.5])
    else:
        x = _pi_h(p1, h)
        q = np.array([x, 1.0 - x])
        if flip:
            q = q[::-1]
    proposal = FiniteDistribution(pi.atoms, q)
    value, worst = two_atom_wlc_value(pi, proposal, h)
    return WlcSolution(proposal, value, worst, "closed_form", h)


def two_atom_minimax(pi, h):
    """Exact minimizer of ``WLC_h(. | pi)`` on two atoms.

    The worst target is an endpoint ``a`` or ``b`` of the feasible interval.
    On ``(a, b)`` the cost of ``a`` increases and the cost of ``b``
    decreases in ``mu(1)``, so the minimax proposal is where they cross.
    """
    _check_two_atoms(pi)
    a, b = two_atom_feasible_interval(pi, h)
    if b - a <= 0.0:
        m = a
    else:
        ea, eb = np.array([a, 1 - a]), np.array([b, 1 - b])

        def diff(m):
            q = np.array([m, 1.0 - m])
            return kl_vectors(ea, q) - kl_vectors(eb, q)

        lo, hi = max(a, 1e-300), min(b, 1.0 - 1e-16)
        if diff(lo) < 0 < diff(hi):
            m = brentq(diff, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            # an endpoint at 0 or 1 makes one cost infinite; fall back to a scalar search
            m = minimize_scalar(lambda x: abs(diff(x)), bounds=(lo, hi), method="bounded",
                                options={"xatol": 1e-13}).x
    proposal = FiniteDistribution(pi.atoms, [m, 1.0 - m])
    value, worst = two_atom_wlc_value(pi, proposal, h)
    return WlcSolution(proposal, value, worst, "closed_form", h)


def _tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def regime_label(solution, pi, tol=1e-6):
    """``"reference"``, ``"uniform"`` or ``"intermediate"`` by total variation."""
    q = solution.proposal.aligned_to(pi)
    if _tv(q, pi.probs) <= tol:
        return "reference"
    if _tv(q, np.full(q.size, 1.0 / q.size)) <= tol:
        return "uniform"
    return "intermediate"


def wlc_sweep(pi, hs, proposal_grid_resolution=200, tol=1e-6):
    """Grid argmin, regime and value for each budget in ``hs``."""
    rows = []
    base = WlcProblem(pi, 0.0)
    for h in hs:
        sol = wlc_argmin_grid(base.with_h(float(h)), proposal_grid_resolution)
        rows.append({"h": float(h), "regime": regime_label(sol, pi, tol),
                     "proposal": sol.proposal.probs.tolist(), "wlc_value": sol.wlc_value})
    return rows


def decomposition_residual(eta, mu, pi):
    """``Ent(eta|mu) - Ent(eta|pi) - eta(ln pi/mu)`` for finite distributions."""
    e = eta.aligned_to(pi)
    m = mu.aligned_to(pi)
    p = pi.probs
    s = e > 0
    cross = float(e[s] @ (np.log(p[s]) - np.log(m[s])))
    return kl_vectors(e, m) - kl_vectors(e, p) - cross


# -- unit square -----------------------------------------------------------------

def _square_grid(n):
    c = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(c, c, indexing="ij")
    return X, Y


def _eval_on_square(f, X, Y):
    pts = np.column_stack([X.ravel(), Y.ravel()])
    if isinstance(f, Statistic):
        vals = f.evaluate(pts)[:, 0]
    else:
        vals = np.asarray(f(pts), dtype=float).reshape(-1)
    return vals.reshape(X.shape)


@dataclass
class StripTarget:
    """Uniform reference on the unit square conditioned on per-slice upper sets.

    ``weights[i, j]`` is the target mass of quadrature cell ``(x_i, y_j)``;
    ``coverage[i, j]`` is the fraction of that cell inside the strip.
    """

    h: float
    h_star: float
    slice_fraction: float
    weights: np.ndarray = field(repr=False)
    coverage: np.ndarray = field(repr=False)
    f_values: np.ndarray = field(repr=False)
    threshold_description: str = "per-slice upper set of f, ties broken by larger y"

    @property
    def n_grid(self):
        return self.weights.shape[0]

    def entropy_wrt_reference(self):
        """``Ent(eta | pi)`` by quadrature, density taken on the covered part of each cell."""
        n = self.n_grid
        s = self.weights > 0
        dens = self.weights[s] * n * n / self.coverage[s]
        return float(self.weights[s] @ np.log(dens))

    def slice_masses(self):
        return self.weights.sum(axis=1)

    def pushforward_error(self):
        return float(np.max(np.abs(self.slice_masses() - 1.0 / self.n_grid)))

    def expectation(self, values=None):
        """``eta(g)`` for a grid of values (default ``f``)."""
        values = self.f_values if values is None else values
        return float(np.sum(self.weights * values))

    def reference_expectation(self, values=None):
        values = self.f_values if values is None else values
        return float(values.mean())


def build_strip_target(f, h, n_grid=1024):
    """Adversarial target for the first-coordinate push-forward constraint.

    On every vertical slice ``x = x_i`` the target keeps the top fraction
    ``e^{-h}`` of the slice ranked by ``f`` (ties broken by larger ``y``),
    including a fractional cell at the threshold, and renormalizes.

    Parameters
    ----------
    f : Statistic or callable
        Scalar function of ``(n, 2)`` points.
    h : float
        Entropy budget, ``h >= 0``.
    n_grid : int
        Cells per axis of the midpoint quadrature.

    Raises
    ------
    QuadratureFailure
        The strip would be thinner than one cell.
    """
    X, Y = _square_grid(n_grid)
    return _strip_from_values(_eval_on_square(f, X, Y), h, Y)


def _strip_from_values(F, h, Y):
    if h < 0:
        raise DomainError("h must be nonnegative")
    n_grid = F.shape[1]
    frac = math.exp(-h)
    m = frac * n_grid
    if m < 1.0:
        raise QuadratureFailure(f"strip of relative width {frac:.3g} is below one cell at n_grid={n_grid}")
    if not np.all(np.isfinite(F)):
        raise QuadratureFailure("f is not finite on the quadrature grid")
    order = np.lexsort((-Y, -F), axis=1)
    full = int(math.floor(m))
    part = m - full
    rank_cov = np.zeros(n_grid)
    rank_cov[:full] = 1.0
    if full < n_grid:
        rank_cov[full] = part
    coverage = np.empty_like(F)
    np.put_along_axis(coverage, order, np.broadcast_to(rank_cov, F.shape), axis=1)
    weights = coverage / (F.shape[0] * m)
    return StripTarget(h, 0.0, frac, weights, coverage, F)


@dataclass
class LowerBoundCheck:
    """Slack of the proposal lower bound at one strip target.

    ``slack = Ent(eta|mu) - h - Ent(pi|mu)``, the direction delivered by the
    limiting argument; ``reverse_slack`` uses ``Ent(mu|pi)`` instead and is
    reported only.
    """

    h: float
    slack: float
    reverse_slack: float
    ent_eta_mu: float
    ent_pi_mu: float
    ent_mu_pi: float


def proposal_lower_bound_check(mu_density, h, n_grid=1024, clip=50.0):
    """Evaluate the proposal lower bound for a density ``mu`` on the unit square.

    Parameters
    ----------
    mu_density : callable
        Positive (possibly unnormalized) density of ``(n, 2)`` points.
    h : float
    n_grid : int
    clip : float
        ``f = ln(pi/mu)`` is clipped to ``[-clip, clip]`` before building the strip.
    """
    X, Y = _square_grid(n_grid)
    dens = _eval_on_square(mu_density, X, Y)
    if np.any(dens <= 0) or not np.all(np.isfinite(dens)):
        raise QuadratureFailure("mu density must be positive and finite on the grid")
    dens = dens / dens.mean()
    log_mu = np.log(dens)
    f = np.clip(-log_mu, -clip, clip)
    eta = _strip_from_values(f, h, Y)
    s = eta.weights > 0
    ent_eta_pi = eta.entropy_wrt_reference()
    ent_eta_mu = ent_eta_pi + float(eta.weights[s] @ (-log_mu[s]))
    ent_pi_mu = float(np.mean(-log_mu))
    ent_mu_pi = float(np.mean(dens * log_mu))
    return LowerBoundCheck(h, ent_eta_mu - h - ent_pi_mu, ent_eta_mu - h - ent_mu_pi,
                          ent_eta_mu, ent_pi_mu, ent_mu_pi)
