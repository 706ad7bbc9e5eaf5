"""Probability objects shared by every other module.

Finite distributions carry exact arithmetic; continuous reference measures
expose a sampler plus an (unnormalized) log-density; importance-sampling
output is a :class:`WeightedEnsemble` kept entirely in log-space.
"""

import ast
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._validation import check_probability_vector, check_stat_table
from .exceptions import AllWeightsDegenerate, MismatchedSupport

__all__ = [
    "FiniteDistribution",
    "SampleableModel",
    "GaussianModel",
    "CategoricalModel",
    "UniformModel",
    "Statistic",
    "WeightedEnsemble",
    "normalize",
    "empirical_mean",
    "effective_sample_size",
    "stat_table",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _parse_atom(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


@dataclass(frozen=True)
class FiniteDistribution:
    """Probability vector on a tuple of distinct, hashable atoms.

    Parameters
    ----------
    atoms : sequence of hashable
        Atom labels. Tuples are allowed, which is how product grids are
        represented.
    probs : array-like of float
        Probabilities, nonnegative and summing to one within 1e-12.
    """

    atoms: tuple
    probs: np.ndarray

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if len(set(atoms)) != len(atoms):
            raise ValueError("atoms must be distinct")
        probs = check_probability_vector(self.probs)
        if probs.size != len(atoms):
            raise ValueError("atoms and probs differ in length")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", _frozen(probs))

    @classmethod
    def from_probs(cls, probs):
        """Distribution on atoms ``0..k-1``."""
        probs = np.asarray(probs, dtype=float)
        return cls(tuple(range(probs.size)), probs)

    @classmethod
    def uniform(cls, atoms):
        atoms = tuple(atoms)
        return cls(atoms, np.full(len(atoms), 1.0 / len(atoms)))

    @classmethod
    def point_mass(cls, atoms, atom):
        atoms = tuple(atoms)
        p = np.zeros(len(atoms))
        p[atoms.index(atom)] = 1.0
        return cls(atoms, p)

    def __len__(self):
        return len(self.atoms)

    def __getitem__(self, atom):
        return float(self.probs[self.atoms.index(atom)])

    @property
    def support(self):
        return tuple(a for a, p in zip(self.atoms, self.probs) if p > 0)

    def aligned_to(self, other):
        """Probability vector of ``self`` reordered to ``other.atoms``.

        Raises :class:`MismatchedSupport` when the atom sets differ.
        """
        if self.atoms == other.atoms:
            return self.probs
        if set(self.atoms) != set(other.atoms):
            raise MismatchedSupport("distributions are defined on different atoms")
        index = {a: i for i, a in enumerate(self.atoms)}
        return self.probs[[index[a] for a in other.atoms]]

    def sample_indices(self, rng, size):
        return rng.choice(len(self.atoms), size=size, p=self.probs)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["atom", "prob"])
            for a, p in zip(self.atoms, self.probs):
                w.writerow([a if isinstance(a, str) else repr(a), "%.17g" % p])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple(_parse_atom(r["atom"]) for r in rows), [float(r["prob"]) for r in rows])


class SampleableModel:
    """Reference or target measure on R^d with a sampler and a log-density.

    Subclasses implement :meth:`draw` and :meth:`log_density`. The
    log-density is taken with respect to the ambient reference (Lebesgue
    measure for continuous models, counting measure for categorical ones)
    and may be unnormalized; it is ``-inf`` exactly off the support.
    """

    dimension = 1
    is_discrete = False

    def draw(self, rng, size):
        raise NotImplementedError

    def log_density(self, points):
        raise NotImplementedError


class GaussianModel(SampleableModel):
    """Independent Gaussian coordinates with given means and scales."""

    def __init__(self, mean=0.0, scale=1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.scale = np.broadcast_to(np.asarray(scale, dtype=float), self.mean.shape).copy()
        if np.any(self.scale <= 0):
            raise ValueError("scale must be positive")
        self.dimension = self.mean.size

    def draw(self, rng, size):
        return self.mean + self.scale * rng.standard_normal((size, self.dimension))

    def log_density(self, points):
        z = (np.atleast_2d(points) - self.mean) / self.scale
        return (-0.5 * np.sum(z**2, axis=1) - np.sum(np.log(self.scale))
                - 0.5 * self.dimension * np.log(2 * np.pi))


class UniformModel(SampleableModel):
    """Uniform law on the box ``[low, high]``."""

    def __init__(self, low=0.0, high=1.0):
        self.low = np.atleast_1d(np.asarray(low, dtype=float))
        self.high = np.broadcast_to(np.asarray(high, dtype=float), self.low.shape).copy()
        if np.any(self.high <= self.low):
            raise ValueError("need high > low")
        self.dimension = self.low.size

    def draw(self, rng, size):
        return rng.uniform(self.low, self.high, size=(size, self.dimension))

    def log_density(self, points):
        points = np.atleast_2d(points)
        inside = np.all((points >= self.low) & (points <= self.high), axis=1)
        return np.where(inside, -np.sum(np.log(self.high - self.low)), -np.inf)


class CategoricalModel(SampleableModel):
    """Finite distribution embedded in R^d: atom ``i`` sits at ``values[i]``."""

    is_discrete = True

    def __init__(self, values, probs):
        self.values = check_stat_table(values, name="values")
        self.probs = check_probability_vector(probs)
        if self.values.shape[0] != self.probs.size:
            raise ValueError("values and probs differ in length")
        self.dimension = self.values.shape[1]
        with np.errstate(divide="ignore"):
            self._logp = np.log(self.probs)

    @classmethod
    def from_finite(cls, dist, values=None):
        if values is None:
            values = np.asarray(dist.atoms, dtype=float)
        return cls(values, dist.probs)

    def draw(self, rng, size):
        return self.values[rng.choice(self.probs.size, size=size, p=self.probs)]

    def log_density(self, points):
        points = np.atleast_2d(points)
        match = np.all(points[:, None, :] == self.values[None, :, :], axis=2)
        out = np.full(points.shape[0], -np.inf)
        hit = match.any(axis=1)
        out[hit] = self._logp[match[hit].argmax(axis=1)]
        return out


@dataclass(frozen=True)
class Statistic:
    """Vector-valued statistic ``T: E -> R^d``.

    ``func`` receives a 2-d array of points ``(n, D)`` and returns ``(n,)``
    or ``(n, d)``.
    """

    func: object
    dimension: int = 1
    declared_bound: float = None
    name: str = "T"

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        out = np.asarray(self.func(points), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.shape != (points.shape[0], self.dimension):
            raise ValueError(f"statistic returned shape {out.shape}, expected "
                             f"({points.shape[0]}, {self.dimension})")
        return out

    __call__ = evaluate

    @classmethod
    def identity(cls, dimension=1):
        return cls(lambda x: x, dimension, name="identity")

    @classmethod
    def coordinate(cls, i):
        return cls(lambda x: x[:, i], 1, name=f"coord{i}")


def stat_table(dist, T):
    """Values of ``T`` on the atoms of a finite distribution, shape ``(k, d)``.

    ``T`` may already be such a table.
    """
    if isinstance(T, Statistic):
        pts = np.asarray(dist.atoms, dtype=float).reshape(len(dist), -1)
        return T.evaluate(pts)
    return check_stat_table(T, len(dist))


@dataclass(frozen=True)
class WeightedEnsemble:
    """Points with unnormalized log-weights.

    Parameters
    ----------
    points : array-like, shape (N, d)
    log_weights : array-like, shape (N,)
    """

    points: np.ndarray
    log_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a non-empty (N, d) array")
        lw = np.zeros(pts.shape[0]) if self.log_weights is None else np.asarray(self.log_weights, float)
        if lw.shape != (pts.shape[0],):
            raise ValueError("points and log_weights differ in length")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise ValueError("log_weights must not contain nan or +inf")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "log_weights", _frozen(lw))

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def dimension(self):
        return self.points.shape[1]

    def log_normalizer(self):
        if np.all(self.log_weights == -np.inf):
            raise AllWeightsDegenerate("every log-weight is -inf")
        return logsumexp(self.log_weights)

    def normalized_weights(self):
        return np.exp(self.log_weights - self.log_normalizer())

    def normalize(self):
        return normalize(self)

    def effective_sample_size(self):
        return effective_sample_size(self)

    def empirical_mean(self, stat=None):
        return empirical_mean(self, stat)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"point_{j}" for j in range(self.dimension)] + ["log_weight"])
            for x, lw in zip(self.points, self.log_weights):
                w.writerow(["%.17g" % v for v in x] + ["%.17g" % lw])

    @classmethod
    def from_csv(cls, path):
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
        names = data.dtype.names
        pts = np.column_stack([data[n] for n in names if n.startswith("point_")])
        return cls(pts, np.asarray(data["log_weight"], dtype=float))


def normalize(ensemble):
    """Shift log-weights so that their log-sum-exp is exactly zero."""
    return WeightedEnsemble(ensemble.points, ensemble.log_weights - ensemble.log_normalizer())


def empirical_mean(ensemble, stat=None):
    """Self-normalized estimate ``sum_n W_n T(X_n)``; ``stat=None`` means identity."""
    w = ensemble.normalized_weights()
    values = ensemble.points if stat is None else stat.evaluate(ensemble.points)
    keep = w > 0
    # centring on one sample point makes constant statistics exact
    anchor = values[np.argmax(w)]
    return anchor + w[keep] @ (values[keep] - anchor)


def effective_sample_size(ensemble):
    """``(sum w)^2 / sum w^2``, between 1 and N."""
    w = ensemble.normalized_weights()
    return float(np.clip(1.0 / np.sum(w * w), 1.0, ensemble.size))
