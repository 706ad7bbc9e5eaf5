"""Input validation and random-stream helpers shared by the estimators."""

import numbers
import zlib

import numpy as np

from .exceptions import DomainError

PROB_TOL = 1e-12


def check_random_state(seed):
    """Turn ``seed`` into a counter-based :class:`numpy.random.Generator`.

    ``None`` draws fresh OS entropy, an int seeds a Philox stream, and an
    existing Generator is passed through untouched.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.Generator(np.random.Philox(seed))
    raise TypeError(f"cannot build a random generator from {seed!r}")


def named_stream(seed, name):
    """Independent Philox stream derived from ``seed`` and a stream ``name``.

    The same (seed, name) pair always yields the same stream, whatever other
    streams were created before it.
    """
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def split(rng, n):
    """Split ``rng`` into ``n`` independent child generators."""
    return rng.spawn(n)


def check_probability_vector(p, name="probs"):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
    return p


def check_unit_interval(x, name, closed=False):
    """Check ``x`` lies in (0, 1), or [0, 1] when ``closed``."""
    x = float(x)
    ok = 0.0 <= x <= 1.0 if closed else 0.0 < x < 1.0
    if not ok:
        raise DomainError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {x}")
    return x


def check_stat_table(values, n_rows=None, name="statistic"):
    """Coerce statistic values to a 2-d float array ``(n_points, d)``."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise ValueError(f"{name} table must be 1-d or 2-d")
    if n_rows is not None and values.shape[0] != n_rows:
        raise ValueError(f"{name} table has {values.shape[0]} rows, expected {n_rows}")
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} values must be finite")
    return values


def check_vector(x, d, name):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"{name} must have shape ({d},), got {x.shape}")
    return x
