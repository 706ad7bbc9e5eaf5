"""Tempered sequential Monte Carlo for Gibbs proposals.

The sampler moves a particle cloud from ``pi`` to
``mu_beta ~ exp<beta, T> d pi`` along a fixed ladder ``0 = l_0 < ... < l_K = 1``
of multipliers of ``beta`` and accumulates the standard unbiased estimate of
the normalizing constant ``Z_beta``.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._validation import check_random_state, check_unit_interval, check_vector
from .exceptions import AllWeightsDegenerate, MoveKernelRejectionStall
from .measures import WeightedEnsemble

__all__ = [
    "SmcConfig",
    "SmcResult",
    "StageDiagnostics",
    "RandomWalkKernel",
    "IndependenceKernel",
    "run_smc",
    "systematic_resample",
    "multinomial_resample",
    "systematic_indices",
    "multinomial_indices",
]


def systematic_indices(weights, rng, n=None):
    """Ancestor indices from a single uniform draw (systematic resampling)."""
    n = weights.size if n is None else n
    u = (rng.uniform() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.size - 1)


def multinomial_indices(weights, rng, n=None):
    n = weights.size if n is None else n
    return rng.choice(weights.size, size=n, p=weights / weights.sum())


def _resample(ensemble, rng, picker):
    w = ensemble.normalized_weights()
    idx = picker(w, rng)
    return WeightedEnsemble(ensemble.points[idx], np.zeros(idx.size))


def systematic_resample(ensemble, rng):
    """Equally weighted ensemble whose replication counts have mean ``N W_n``."""
    return _resample(ensemble, rng, systematic_indices)


def multinomial_resample(ensemble, rng):
    return _resample(ensemble, rng, multinomial_indices)


class RandomWalkKernel:
    """Gaussian random-walk Metropolis step with a per-stage adapted scale.

    The scale is a multiple of the particle standard deviation; the multiple
    shrinks or grows after each stage to keep acceptance within
    [``target_low``, ``target_high``].
    """

    def __init__(self, n_steps=1, init_scale=2.38, target_low=0.3, target_high=0.5):
        self.n_steps = n_steps
        self.init_scale = init_scale
        self.target_low = target_low
        self.target_high = target_high

    def reset(self):
        self.scale = self.init_scale

    def __call__(self, points, log_target, rng):
        n, d = points.shape
        spread = points.std(axis=0)
        spread = np.where(spread > 0, spread, 1.0)
        step = self.scale * spread / math.sqrt(d)
        lp = log_target(points)
        accepted = 0
        for _ in range(self.n_steps):
            prop = points + step * rng.standard_normal((n, d))
            lq = log_target(prop)
            ok = np.log(rng.uniform(size=n)) < lq - lp
            points = np.where(ok[:, None], prop, points)
            lp = np.where(ok, lq, lp)
            accepted += ok.sum()
        rate = accepted / (n * self.n_steps)
        if rate < self.target_low:
            self.scale *= 0.7
        elif rate > self.target_high:
            self.scale *= 1.3
        return points, rate


class IndependenceKernel:
    """Metropolis step proposing fresh draws from the reference ``pi``.

    Suits discrete references, where a random walk cannot move. The reference
    density cancels, so only the tilt enters the acceptance ratio.
    """

    def __init__(self, model, n_steps=1):
        self.model = model
        self.n_steps = n_steps

    def reset(self):
        pass

    def __call__(self, points, log_tilt, rng):
        n = points.shape[0]
        lp = log_tilt(points)
        accepted = 0
        for _ in range(self.n_steps):
            prop = self.model.draw(rng, n)
            lq = log_tilt(prop)
            ok = np.log(rng.uniform(size=n)) < lq - lp
            points = np.where(ok[:, None], prop, points)
            lp = np.where(ok, lq, lp)
            accepted += ok.sum()
        return points, accepted / (n * self.n_steps)


@dataclass
class SmcConfig:
    """Settings for :func:`run_smc`.

    ``temperature_ladder`` overrides ``n_stages`` (uniform ladder). A
    ``move_kernel`` of ``None`` selects the default kernel: independence
    Metropolis for discrete references, adaptive random walk otherwise.
    Pass ``move_kernel=False`` for plain annealed importance sampling with
    resampling.
    """

    particle_count: int = 1000
    n_stages: int = 20
    temperature_ladder: object = None
    ess_threshold: float = 0.5
    move_kernel: object = None
    move_steps: int = 1
    resampling: str = "systematic"
    n_replicas: int = 1

    def __post_init__(self):
        if self.particle_count < 1:
            raise ValueError("particle_count must be positive")
        check_unit_interval(self.ess_threshold, "ess_threshold", closed=True)
        if self.ess_threshold == 0:
            raise ValueError("ess_threshold must lie in (0, 1]")
        if self.resampling not in ("systematic", "multinomial"):
            raise ValueError("resampling must be 'systematic' or 'multinomial'")
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be positive")
        ladder = self.ladder
        if ladder[0] != 0.0 or ladder[-1] != 1.0 or np.any(np.diff(ladder) <= 0):
            raise ValueError("temperature ladder must increase strictly from 0 to 1")

    @property
    def ladder(self):
        if self.temperature_ladder is None:
            return np.linspace(0.0, 1.0, self.n_stages + 1)
        return np.asarray(self.temperature_ladder, dtype=float)


@dataclass
class StageDiagnostics:
    stage: int
    lam: float
    ess: float
    resampled: bool
    acceptance: float


@dataclass
class SmcResult:
    """Output of :func:`run_smc`.

    ``log_z_estimate`` averages the per-replica estimates and
    ``log_z_std_error`` is their standard error (``nan`` for one replica).
    ``ensemble`` and ``stage_diagnostics`` come from the first replica.
    """

    ensemble: WeightedEnsemble
    log_z_estimate: float
    log_z_std_error: float
    stage_diagnostics: list = field(default_factory=list)
    replica_log_z: np.ndarray = None

    def to_dict(self):
        return {
            "log_z_estimate": self.log_z_estimate,
            "log_z_std_error": None if math.isnan(self.log_z_std_error) else self.log_z_std_error,
            "replica_log_z": [float(v) for v in self.replica_log_z],
            "stage_diagnostics": [vars(s) for s in self.stage_diagnostics],
            "ensemble": {
                "points": self.ensemble.points.tolist(),
                "log_weights": self.ensemble.log_weights.tolist(),
            },
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        se = d["log_z_std_error"]
        return cls(
            ensemble=WeightedEnsemble(np.asarray(d["ensemble"]["points"], float),
                                      np.asarray(d["ensemble"]["log_weights"], float)),
            log_z_estimate=float(d["log_z_estimate"]),
            log_z_std_error=math.nan if se is None else float(se),
            stage_diagnostics=[StageDiagnostics(**s) for s in d["stage_diagnostics"]],
            replica_log_z=np.asarray(d["replica_log_z"], float),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def diagnostics_to_csv(self, path, fmt="%.12g"):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "lambda", "ess", "resampled", "acceptance"])
            for s in self.stage_diagnostics:
                acc = "" if s.acceptance is None or math.isnan(s.acceptance) else fmt % s.acceptance
                w.writerow([s.stage, fmt % s.lam, fmt % s.ess, int(s.resampled), acc])


def _default_kernel(pi, cfg):
    if cfg.move_kernel is False:
        return None
    if cfg.move_kernel is not None:
        return cfg.move_kernel
    if pi.is_discrete:
        return IndependenceKernel(pi, cfg.move_steps)
    return RandomWalkKernel(cfg.move_steps)


def _single_run(pi, T, beta, cfg, rng, kernel):
    ladder = cfg.ladder
    n = cfg.particle_count
    picker = systematic_indices if cfg.resampling == "systematic" else multinomial_indices
    x = pi.draw(rng, n)
    tilt = T.evaluate(x) @ beta
    logw = np.zeros(n)
    log_z = 0.0
    diags = []
    stall = 0
    if kernel is not None:
        kernel.reset()
    for k in range(1, ladder.size):
        dl = ladder[k] - ladder[k - 1]
        incr = dl * tilt
        # log sum_n W_n exp(incr_n), W the current normalized weights
        lw_norm = logw - logsumexp(logw)
        log_z += float(logsumexp(lw_norm + incr))
        logw = logw + incr
        if not np.any(np.isfinite(logw)):
            raise AllWeightsDegenerate(f"all particle weights vanished at stage {k}")
        w = np.exp(logw - logsumexp(logw))
        ess = float(np.clip(1.0 / np.sum(w * w), 1.0, n))
        resampled = ess < cfg.ess_threshold * n
        if resampled:
            idx = picker(w, rng)
            x, tilt = x[idx], tilt[idx]
            logw = np.zeros(n)
        acc = math.nan
        if kernel is not None and beta.any():
            lam = ladder[k]
            if isinstance(kernel, IndependenceKernel):
                def log_target(p, lam=lam):
                    return lam * (T.evaluate(p) @ beta)
            else:
                def log_target(p, lam=lam):
                    return pi.log_density(p) + lam * (T.evaluate(p) @ beta)
            x, acc = kernel(x, log_target, rng)
            tilt = T.evaluate(x) @ beta
            stall = stall + 1 if acc < 0.01 else 0
            if stall >= 3:
                warnings.warn("move kernel acceptance below 1% for 3 consecutive stages",
                              MoveKernelRejectionStall, stacklevel=3)
                stall = 0
        diags.append(StageDiagnostics(k, float(ladder[k]), ess, bool(resampled), float(acc)))
    return WeightedEnsemble(x, logw), log_z, diags


def run_smc(pi, T, beta, cfg=None, rng=None):
    """Sample ``mu_beta ~ exp<beta, T> d pi`` and estimate ``ln Z_beta``.

    Parameters
    ----------
    pi : SampleableModel
        Reference with ``draw`` and, for random-walk moves, ``log_density``.
    T : Statistic
    beta : array-like, shape (d,)
    cfg : SmcConfig
    rng : int or numpy Generator

    Returns
    -------
    SmcResult
    """
    cfg = SmcConfig() if cfg is None else cfg
    rng = check_random_state(rng)
    beta = check_vector(beta, T.dimension, "beta")
    kernel = _default_kernel(pi, cfg)
    streams = rng.spawn(cfg.n_replicas)
    runs = [_single_run(pi, T, beta, cfg, s, kernel) for s in streams]
    log_zs = np.array([r[1] for r in runs])
    se = float(log_zs.std(ddof=1) / math.sqrt(log_zs.size)) if log_zs.size > 1 else math.nan
    return SmcResult(runs[0][0], float(log_zs.mean()), se, runs[0][2], log_zs)
