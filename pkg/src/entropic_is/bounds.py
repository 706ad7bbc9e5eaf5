"""Required sample size for importance sampling, bounded by relative entropy.

For a unit-mean likelihood ratio ``Y`` the critical sample size ``N*`` at
precision ``delta`` and failure probability ``p_alpha`` satisfies
``|ln N* - E[Y ln Y]| <= R(Y)``, where the slack ``R`` trades a Renyi-entropy
gap against ``ln c / theta``. Two variants of the slack are provided:

``"theorem"``
    ``inf_theta (Ent_{1+theta} - Ent_{1-theta}) + ln c / theta``
``"corollary"``
    ``inf_theta 2 (Ent_{1+theta} - Ent_{1-theta}) + ln c / theta``
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.isotonic import IsotonicRegression

from ._validation import check_random_state, check_unit_interval
from .entropy import EntropyReport
from .exceptions import DomainError, GridTooNarrow, ProfileIncomplete

__all__ = [
    "c_constant",
    "slack_r",
    "LikelihoodRatio",
    "ThreePointParams",
    "three_point_report",
    "three_point_ratio",
    "BoundReport",
    "bound_report",
    "DeviationProbeConfig",
    "CriticalSampleSize",
    "empirical_critical_n",
    "dominance_sweep",
    "THETA_MIN",
]

THETA_MIN = 1e-4
VARIANTS = ("theorem", "corollary")
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def c_constant(delta, p_alpha):
    """``max((3/(p_alpha delta))^4, (2/((1-p_alpha)(1-delta)))^2)``."""
    delta = check_unit_interval(delta, "delta")
    p_alpha = check_unit_interval(p_alpha, "p_alpha")
    return max((3.0 / (p_alpha * delta)) ** 4, (2.0 / ((1.0 - p_alpha) * (1.0 - delta))) ** 2)


class LikelihoodRatio:
    """Finite-valued likelihood ratio ``Y >= 0`` with exact moments.

    Parameters
    ----------
    values, probs : array-like
        Support points and their probabilities. ``E[Y]`` must be one within
        ``1e-9`` unless ``check_mean=False``.
    """

    def __init__(self, values, probs, check_mean=True):
        self.values = np.asarray(values, dtype=float)
        self.probs = np.asarray(probs, dtype=float)
        if self.values.shape != self.probs.shape or self.values.ndim != 1:
            raise ValueError("values and probs must be 1-d of equal length")
        if np.any(self.values < 0) or np.any(self.probs < 0):
            raise DomainError("Y and its probabilities must be nonnegative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must sum to one")
        if check_mean and abs(self.mean() - 1.0) > 1e-9:
            raise DomainError(f"E[Y] must be 1, got {self.mean()!r}")
        s = (self.values > 0) & (self.probs > 0)
        self._logy = np.log(self.values[s])
        self._logp = np.log(self.probs[s])

    def mean(self):
        return float(self.probs @ self.values)

    def log_moment(self, power):
        """``ln E[Y^power]`` over ``Y > 0`` (the ``Y = 0`` atom contributes nothing for power > 0)."""
        return float(logsumexp(self._logp + power * self._logy))

    def ent(self):
        """``E[Y ln Y]`` = ``Ent(eta | mu)``."""
        return float(np.exp(self._logp + self._logy) @ self._logy)

    def renyi(self, order):
        if order == 1:
            return self.ent()
        # Ent_a = ln E_mu[Y^a] / (a - 1), with E_mu[Y^a] = E_eta[Y^(a-1)]
        return self.log_moment(order) / (order - 1.0)

    def gap(self, theta):
        """``Ent_{1+theta} - Ent_{1-theta} = (1/theta) ln(E Y^{1+theta} E Y^{1-theta})``."""
        return (self.log_moment(1.0 + theta) + self.log_moment(1.0 - theta)) / theta

    def entropy_report(self, orders=(0.5, 1.0, 1.5, 2.0)):
        orders = tuple(float(a) for a in orders)
        ent = self.ent()
        w = np.exp(self._logp + self._logy)
        var = float(w @ (self._logy - ent) ** 2)
        return EntropyReport(ent, {a: self.renyi(a) for a in orders}, var)

    def sample(self, rng, size):
        return self.values[rng.choice(self.values.size, size=size, p=self.probs)]

    def sample_means(self, rng, n, m):
        """``m`` independent means of ``n`` draws, via multinomial counts."""
        counts = rng.multinomial(n, self.probs, size=m)
        return counts @ self.values / n


def _gap_function(profile):
    if isinstance(profile, LikelihoodRatio):
        return profile.gap
    if isinstance(profile, EntropyReport):
        orders = np.array(sorted(a for a in profile.renyi if np.isfinite(a)))
        vals = np.array([profile.renyi[a] for a in orders])
        if orders.size < 3 or orders[0] > 0.0 or orders[-1] < 2.0:
            raise ProfileIncomplete("Renyi profile must cover orders 0..2")

        def gap(theta):
            return float(np.interp(1 + theta, orders, vals) - np.interp(1 - theta, orders, vals))
        return gap
    if callable(profile):
        return profile
    raise TypeError("profile must be a LikelihoodRatio, EntropyReport or callable gap(theta)")


def _objective(gap, log_c, variant):
    factor = 2.0 if variant == "corollary" else 1.0

    def f(theta):
        g = gap(theta)
        return factor * g + log_c / theta if np.isfinite(g) else math.inf
    return f


def _golden_section(f, a, b, tol=1e-10, max_iter=200):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * (1.0 + abs(c)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def slack_r(profile, c, variant="theorem", n_seed_grid=100):
    """Minimize the slack objective over ``theta in [1e-4, 1]``.

    Parameters
    ----------
    profile : LikelihoodRatio, EntropyReport or callable
        Source of the Renyi gap ``theta -> Ent_{1+theta} - Ent_{1-theta}``.
    c : float
        The constant from :func:`c_constant`.
    variant : {"theorem", "corollary"}

    Returns
    -------
    theta_star, slack : float
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    f = _objective(_gap_function(profile), math.log(c), variant)
    grid = np.geomspace(THETA_MIN, 1.0, n_seed_grid)
    vals = np.array([f(t) for t in grid])
    if not np.any(np.isfinite(vals)):
        raise ProfileIncomplete("Renyi gap is infinite on the whole theta grid")
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    theta, val = _golden_section(f, lo, hi)
    if vals[i] < val:
        theta, val = grid[i], vals[i]
    return float(theta), float(val)


@dataclass
class BoundReport:
    """Entropy estimate of ``ln N*`` with its two-sided slack."""

    ent: float
    theta_star: float
    slack_r: float
    c_constant: float
    variant: str = "theorem"
    delta: float = None
    p_alpha: float = None

    @property
    def ln_nstar_interval(self):
        return (self.ent - self.slack_r, self.ent + self.slack_r)

    def contains(self, ln_n):
        lo, hi = self.ln_nstar_interval
        return lo <= ln_n <= hi

    def to_dict(self):
        d = {k: getattr(self, k) for k in
             ("ent", "theta_star", "slack_r", "c_constant", "variant", "delta", "p_alpha")}
        d["ln_nstar_interval"] = list(self.ln_nstar_interval)
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("ln_nstar_interval", None)
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def bound_report(y, delta, p_alpha, variant="theorem"):
    """:class:`BoundReport` for a :class:`LikelihoodRatio` (or a gap callable with ``ent``)."""
    c = c_constant(delta, p_alpha)
    theta, slack = slack_r(y, c, variant)
    return BoundReport(y.ent(), theta, slack, c, variant, delta, p_alpha)


@dataclass(frozen=True)
class ThreePointParams:
    """``Y`` on ``{0, l2, l1}`` with ``P(Y=l1) = alpha/l1`` and ``P(Y=l2) = (1-alpha)/l2``.

    ``l2 = r * l1``. The high atom carries mass ``alpha`` of the unit mean.
    """

    l1: float
    r: float
    alpha: float

    def __post_init__(self):
        if not self.l1 > 0:
            raise DomainError("l1 must be positive")
        check_unit_interval(self.r, "r")
        check_unit_interval(self.alpha, "alpha")
        p1, p2 = self.p1, self.p2
        if not (0 < p1 < 1 and 0 < p2 < 1 and p1 + p2 <= 1 + 1e-15):
            raise DomainError(f"derived probabilities p1={p1}, p2={p2} are invalid")

    @property
    def l2(self):
        return self.r * self.l1

    @property
    def p1(self):
        return self.alpha / self.l1

    @property
    def p2(self):
        return (1.0 - self.alpha) / self.l2

    @property
    def regime_ratio(self):
        """``alpha / r^(1-alpha)``; large values mean the high atom dominates the variance."""
        return self.alpha / self.r ** (1.0 - self.alpha)

    def likelihood_ratio(self):
        p0 = max(1.0 - self.p1 - self.p2, 0.0)
        return LikelihoodRatio([0.0, self.l2, self.l1], [p0, self.p2, self.p1], check_mean=False)


def three_point_ratio(params, theta):
    """``(1/theta) ln(E Y^{1+theta} E Y^{1-theta})`` in closed form."""
    a, r = params.alpha, params.r
    x = theta * math.log(r)
    # r^theta + r^-theta - 2 = 2 (cosh(x) - 1)
    return math.log1p(a * (1 - a) * 2.0 * (math.cosh(x) - 1.0)) / theta


def three_point_report(params, delta=0.5, p_alpha=0.5, variant="theorem"):
    """Closed-form entropy/variance comparison for the three-point ``Y``.

    ``ln_var`` is the log second moment ``ln(alpha l1 + (1-alpha) l2)``, which
    stands in for ``ln Var(Y)``; ``gap = ln_var - ent``; ``dominance_ratio``
    is ``gap / slack_r``.

    The slack never drops below ``ln c``, and ``ln c >= ln 81`` for every
    ``delta, p_alpha`` in ``(0, 1)``. The ratio therefore stays small unless
    the gap is many times ``ln c``. Along :func:`dominance_sweep` it grows
    steadily from about 0.16 to 0.41.
    """
    if not isinstance(params, ThreePointParams):
        params = ThreePointParams(*params)
    a = params.alpha
    ln_l1 = math.log(params.l1)
    ln_r = math.log(params.r)
    ent = a * ln_l1 + (1 - a) * (ln_l1 + ln_r)
    ln_var = ln_l1 + math.log(a + (1 - a) * params.r)
    gap = ln_var - ent
    c = c_constant(delta, p_alpha)
    theta, slack = slack_r(lambda t: three_point_ratio(params, t), c, variant)
    return {
        "l1": params.l1,
        "r": params.r,
        "alpha": a,
        "ent": ent,
        "ln_var": ln_var,
        "gap": gap,
        "theta_star": theta,
        "slack_r": slack,
        "dominance_ratio": gap / slack,
        "regime_ratio": params.regime_ratio,
    }


def dominance_sweep(ks=range(4, 13), delta=0.5, p_alpha=0.5, variant="theorem"):
    """Rows of :func:`three_point_report` along ``l1 = 10^k, r = 10^(-k/2), alpha = 10^(-k/4)``."""
    return [three_point_report(ThreePointParams(10.0 ** k, 10.0 ** (-k / 2), 10.0 ** (-k / 4)),
                               delta, p_alpha, variant) for k in ks]


@dataclass
class DeviationProbeConfig:
    delta: float
    p_alpha: float
    replications: int = 10_000
    n_grid: object = None
    n_bootstrap: int = 200
    ci_level: float = 0.95

    def __post_init__(self):
        check_unit_interval(self.delta, "delta")
        check_unit_interval(self.p_alpha, "p_alpha")
        if self.replications < 1000:
            raise DomainError("at least 1000 replications are required")
        if self.n_grid is None:
            self.n_grid = np.unique(np.round(np.geomspace(1, 1e6, 61)).astype(np.int64))
        self.n_grid = np.asarray(self.n_grid, dtype=np.int64)
        if self.n_grid.ndim != 1 or np.any(np.diff(self.n_grid) <= 0) or self.n_grid[0] < 1:
            raise ValueError("n_grid must be strictly increasing positive integers")


@dataclass
class CriticalSampleSize:
    n_star: float
    ci: tuple
    n_grid: np.ndarray
    p_dev_raw: np.ndarray
    p_dev_monotone: np.ndarray
    no_deviation_ever: bool = False

    @property
    def ln_n_star(self):
        return math.log(self.n_star)

    def to_dict(self):
        return {
            "n_star": self.n_star,
            "ln_n_star": self.ln_n_star,
            "ci": list(self.ci),
            "no_deviation_ever": self.no_deviation_ever,
            "n_grid": self.n_grid.tolist(),
            "p_dev_raw": self.p_dev_raw.tolist(),
            "p_dev_monotone": self.p_dev_monotone.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["n_star"]), tuple(d["ci"]), np.asarray(d["n_grid"], dtype=np.int64),
                   np.asarray(d["p_dev_raw"], float), np.asarray(d["p_dev_monotone"], float),
                   bool(d["no_deviation_ever"]))


def _crossing(log_n, p, level):
    """Interpolated ``ln N`` where the nonincreasing curve ``p`` meets ``level``."""
    above = p >= level
    if above.all() or not above.any():
        return None
    j = int(np.argmin(above))      # first index below the level
    if j == 0:
        return None
    # p[j-1] >= level > p[j]; the flat parts of the fit make this well defined
    i = j - 1
    while i > 0 and p[i - 1] == p[i]:
        i -= 1
    span = p[i] - p[j]
    frac = (p[i] - level) / span if span > 0 else 0.5
    return log_n[i] + frac * (log_n[j] - log_n[i])


def _monotone(log_n, p, weights):
    iso = IsotonicRegression(increasing=False, y_min=0.0, y_max=1.0)
    return iso.fit_transform(log_n, p, sample_weight=weights)


def empirical_critical_n(y_sampler, cfg, rng=None):
    """Estimate ``N*`` solving ``P(|mean_N(Y) - 1| >= delta) = p_alpha``.

    Parameters
    ----------
    y_sampler : LikelihoodRatio or callable
        A :class:`LikelihoodRatio`, or ``f(rng, size)`` returning i.i.d.
        draws of ``Y``; for the latter the unit mean is checked by Monte Carlo
        within 3 standard errors.
    cfg : DeviationProbeConfig
    rng : int or Generator

    Returns
    -------
    CriticalSampleSize
        The crossing of the isotonic (nonincreasing) fit of the deviation
        curve with ``p_alpha``, interpolated in ``ln N``, with a parametric
        bootstrap confidence interval.
    """
    rng = check_random_state(rng)
    m = cfg.replications
    if isinstance(y_sampler, LikelihoodRatio):
        if abs(y_sampler.mean() - 1.0) > 1e-9:
            raise DomainError("Y must have unit mean")
        means_of = y_sampler.sample_means
    else:
        probe = np.asarray(y_sampler(rng, 100_000), dtype=float)
        se = probe.std() / math.sqrt(probe.size)
        if abs(probe.mean() - 1.0) > 3 * se + 1e-12:
            raise DomainError(f"sample mean {probe.mean():.6g} is not compatible with E[Y] = 1")

        def means_of(r, n, mm):
            out = np.empty(mm)
            chunk = max(1, 2_000_000 // n)
            for s in range(0, mm, chunk):
                k = min(chunk, mm - s)
                out[s:s + k] = np.asarray(y_sampler(r, k * n), float).reshape(k, n).mean(axis=1)
            return out

    grid = cfg.n_grid
    log_n = np.log(grid.astype(float))
    raw = np.array([np.mean(np.abs(means_of(rng, int(n), m) - 1.0) >= cfg.delta) for n in grid])
    if not raw.any():
        return CriticalSampleSize(float(grid[0]), (float(grid[0]), float(grid[0])), grid, raw,
                                  raw.copy(), no_deviation_ever=True)
    fit = _monotone(log_n, raw, None)
    x = _crossing(log_n, fit, cfg.p_alpha)
    if x is None:
        raise GridTooNarrow(f"deviation probability does not cross p_alpha={cfg.p_alpha} on the grid "
                            f"(range {fit.min():.3g}..{fit.max():.3g})")
    boots = []
    for _ in range(cfg.n_bootstrap):
        pb = rng.binomial(m, raw) / m
        xb = _crossing(log_n, _monotone(log_n, pb, None), cfg.p_alpha)
        if xb is not None:
            boots.append(xb)
    tail = (1.0 - cfg.ci_level) / 2.0
    if boots:
        ci = (float(np.exp(np.quantile(boots, tail))), float(np.exp(np.quantile(boots, 1 - tail))))
    else:
        ci = (math.nan, math.nan)
    return CriticalSampleSize(float(np.exp(x)), ci, grid, raw, fit)
