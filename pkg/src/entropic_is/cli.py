"""Command-line experiment runner.

Each subcommand reads one flat YAML config, draws all randomness from the
config seed through named streams, and writes CSV/JSON artifacts to the
output directory. Exit codes: 0 success, 2 invalid input, 3 numerical
failure.

Example::

    entropic-is bound-sweep --config sweep.yaml --seed 7 --out results/
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np
import yaml

from . import adaptive, bounds, entropy, gibbs, smc, wlc
from ._validation import named_stream
from .exceptions import EntropicISError, NumericalFailure
from .measures import (CategoricalModel, FiniteDistribution, GaussianModel, Statistic,
                       WeightedEnsemble)

__all__ = ["main", "ConfigError", "load_config", "SUBCOMMANDS"]

FMT = "%.12g"


class ConfigError(EntropicISError, ValueError):
    """Invalid experiment config; the message carries the offending line."""


class Config:
    """Parsed key-value config that remembers the source line of each key."""

    def __init__(self, values, lines, path):
        self.values = values
        self.lines = lines
        self.path = path

    def where(self, key):
        line = self.lines.get(key)
        return f"{self.path}:{line}" if line else self.path

    def fail(self, key, msg):
        raise ConfigError(f"{self.where(key)}: {key}: {msg}")

    def get(self, key, default=None, kind=None):
        if key not in self.values:
            return default
        v = self.values[key]
        if kind is None:
            return v
        try:
            return kind(v)
        except (TypeError, ValueError) as exc:
            self.fail(key, f"cannot read {v!r} ({exc})")

    def require(self, key, kind=None):
        if key not in self.values:
            raise ConfigError(f"{self.path}: missing required key {key!r}")
        return self.get(key, kind=kind)


def load_config(path, allowed):
    """Read a YAML mapping, rejecting keys outside ``allowed`` with line numbers."""
    if path is None:
        return Config({}, {}, "<defaults>")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        return Config({}, {}, path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1: config must be a mapping of keys to values")
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}:{lines.get(key, '?')}: unknown key {key!r}; "
                              f"allowed: {', '.join(sorted(allowed))}")
    return Config(data, lines, path)


def _vector(v):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise ValueError("expected a flat list of numbers")
    return a


def _table(v):
    a = np.asarray(v, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FMT % v
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finite_pair(cfg):
    eta = cfg.require("eta", _vector)
    mu = cfg.require("mu", _vector)
    if eta.size != mu.size:
        cfg.fail("mu", "eta and mu must have the same length")
    try:
        return FiniteDistribution.from_probs(eta), FiniteDistribution.from_probs(mu)
    except ValueError as exc:
        cfg.fail("eta", str(exc))


# -- subcommands -------------------------------------------------------------------

def cmd_entropy(cfg, seed, out):
    kind = cfg.get("kind", "finite")
    orders = cfg.get("orders", None)
    orders = entropy.DEFAULT_ORDERS if orders is None else [float(a) for a in orders]
    if kind == "finite":
        eta, mu = _finite_pair(cfg)
        report = entropy.entropy_report_finite(eta, mu, orders)
    elif kind == "gaussian_shift":
        shift = cfg.get("shift", 1.0, float)
        n = cfg.get("n_samples", 100_000, int)
        rng = named_stream(seed, "entropy")
        eta_m, mu_m = GaussianModel(shift, 1.0), GaussianModel(0.0, 1.0)
        draws = WeightedEnsemble(eta_m.draw(rng, n))
        report = entropy.entropy_report_mc(eta_m, mu_m, draws, [a for a in orders if math.isfinite(a)])
    else:
        cfg.fail("kind", "must be 'finite' or 'gaussian_shift'")
    _write_json(os.path.join(out, "entropy_report.json"), report.to_dict())
    _write_csv(os.path.join(out, "renyi_profile.csv"), ["order", "renyi"],
               sorted(report.renyi.items()))
    return report


SWEEP_COLUMNS = ["l1", "r", "alpha", "ent", "ln_var", "gap", "theta_star", "slack_r",
                 "dominance_ratio"]


def cmd_bound_sweep(cfg, seed, out):
    delta = cfg.get("delta", 0.5, float)
    p_alpha = cfg.get("p_alpha", 0.5, float)
    variant = cfg.get("variant", "theorem")
    rows = cfg.get("rows", None)
    if rows is None:
        ks = cfg.get("ks", list(range(4, 13)))
        params = [bounds.ThreePointParams(10.0 ** k, 10.0 ** (-k / 2), 10.0 ** (-k / 4)) for k in ks]
    else:
        if not isinstance(rows, list):
            cfg.fail("rows", "must be a list of {l1, r, alpha} mappings")
        params = []
        for i, r in enumerate(rows):
            try:
                params.append(bounds.ThreePointParams(float(r["l1"]), float(r["r"]), float(r["alpha"])))
            except (KeyError, TypeError) as exc:
                cfg.fail("rows", f"row {i}: needs numeric l1, r, alpha ({exc})")
    reports = [bounds.three_point_report(p, delta, p_alpha, variant) for p in params]
    _write_csv(os.path.join(out, "bound_sweep.csv"), SWEEP_COLUMNS,
               [[rep[c] for c in SWEEP_COLUMNS] for rep in reports])
    return reports


def cmd_wlc_sweep(cfg, seed, out):
    pi = FiniteDistribution.from_probs(cfg.get("pi", [0.7, 0.3], _vector))
    hs = cfg.get("hs", None)
    if hs is None:
        lo = cfg.get("h_min", 0.0, float)
        hi = cfg.get("h_max", 2.0, float)
        step = cfg.get("h_step", 0.01, float)
        if step <= 0 or hi < lo:
            cfg.fail("h_step", "need h_step > 0 and h_max >= h_min")
        hs = lo + step * np.arange(int(math.floor((hi - lo) / step + 1e-9)) + 1)
    res = cfg.get("proposal_grid_resolution", 200, int)
    rows = wlc.wlc_sweep(pi, hs, res)
    k = len(pi)
    _write_csv(os.path.join(out, "wlc_sweep.csv"),
               ["h", "regime"] + [f"argmin_atom_prob_{i}" for i in range(k)] + ["wlc_value"],
               [[r["h"], r["regime"], *r["proposal"], r["wlc_value"]] for r in rows])
    return rows


def _moment_set(cfg, key):
    spec = cfg.get(key)
    if not isinstance(spec, dict):
        cfg.fail(key, "must be a mapping with a 'kind' entry")
    try:
        return gibbs.ConvexMomentSet.from_dict(spec)
    except (KeyError, ValueError, TypeError) as exc:
        cfg.fail(key, f"invalid moment set ({exc})")


def cmd_gibbs_fit(cfg, seed, out):
    pi = FiniteDistribution.from_probs(cfg.require("pi", _vector))
    values = cfg.get("values", None, _table)
    if values is None:
        values = np.arange(len(pi), dtype=float)[:, None]
    if values.shape[0] != len(pi):
        cfg.fail("values", "need one statistic row per atom of pi")
    if "constraint" in cfg.values:
        model = gibbs.solve_convex_constraint(pi, values, _moment_set(cfg, "constraint"))
    else:
        model = gibbs.solve_linear_family(pi, values, cfg.require("t0", _vector))
    d = model.to_dict()
    d["moment"] = model.moment().tolist()
    d["entropy_wrt_reference"] = model.entropy_wrt_reference()
    _write_json(os.path.join(out, "gibbs_model.json"), d)
    return model


def _sampleable(cfg):
    spec = cfg.get("model", {"kind": "gaussian"})
    if not isinstance(spec, dict):
        cfg.fail("model", "must be a mapping with a 'kind' entry")
    kind = spec.get("kind", "gaussian")
    try:
        if kind == "gaussian":
            return GaussianModel(spec.get("mean", 0.0), spec.get("scale", 1.0))
        if kind == "categorical":
            return CategoricalModel(_table(spec["values"]), _vector(spec["probs"]))
    except (KeyError, ValueError) as exc:
        cfg.fail("model", str(exc))
    cfg.fail("model", f"unknown model kind {kind!r}")


def cmd_smc(cfg, seed, out):
    pi = _sampleable(cfg)
    T = Statistic.identity(pi.dimension)
    beta = cfg.require("beta", _vector)
    try:
        sc = smc.SmcConfig(particle_count=cfg.get("particle_count", 1000, int),
                           n_stages=cfg.get("n_stages", 20, int),
                           ess_threshold=cfg.get("ess_threshold", 0.5, float),
                           move_steps=cfg.get("move_steps", 1, int),
                           resampling=cfg.get("resampling", "systematic"),
                           n_replicas=cfg.get("n_replicas", 1, int))
    except ValueError as exc:
        raise ConfigError(f"{cfg.path}: {exc}") from exc
    res = smc.run_smc(pi, T, beta, sc, named_stream(seed, "smc"))
    _write_json(os.path.join(out, "smc_result.json"), res.to_dict())
    res.diagnostics_to_csv(os.path.join(out, "smc_diagnostics.csv"))
    return res


def cmd_cross_entropy(cfg, seed, out):
    pi = FiniteDistribution.from_probs(cfg.require("pi", _vector))
    values = cfg.get("values", None, _table)
    if values is None:
        values = np.arange(len(pi), dtype=float)[:, None]
    target = cfg.require("target_log_density", _vector)
    if target.size != len(pi) or values.shape[0] != len(pi):
        cfg.fail("target_log_density", "need one value per atom of pi")
    variant = cfg.get("variant", "moment")
    res = adaptive.run_cross_entropy(
        target, pi, values, cfg.get("n_samples", 10_000, int),
        beta0=cfg.get("beta0", None, _vector), max_iter=cfg.get("max_iter", 50, int),
        tol=cfg.get("tol", 1e-3, float), variant=variant,
        z_multiplier=cfg.get("z_multiplier", 3.0, float), rng=named_stream(seed, "cross-entropy"))
    res.trajectory_to_csv(os.path.join(out, "ce_trajectory.csv"), FMT)
    _write_json(os.path.join(out, "ce_summary.json"), res.to_dict())
    return res


def _likelihood_ratio(cfg):
    spec = cfg.get("distribution", {"kind": "three_point", "l1": 1e6, "r": 1e-4, "alpha": 0.01})
    if not isinstance(spec, dict):
        cfg.fail("distribution", "must be a mapping with a 'kind' entry")
    kind = spec.get("kind")
    try:
        if kind == "three_point":
            return bounds.ThreePointParams(float(spec["l1"]), float(spec["r"]),
                                           float(spec["alpha"])).likelihood_ratio()
        if kind == "two_atom":
            eps = float(spec["eps"])
            return bounds.LikelihoodRatio([0.0, 1.0 / eps], [1.0 - eps, eps])
        if kind == "finite":
            return bounds.LikelihoodRatio(spec["values"], spec["probs"])
    except KeyError as exc:
        cfg.fail("distribution", f"missing entry {exc}")
    cfg.fail("distribution", f"unknown kind {kind!r}")


def cmd_nstar(cfg, seed, out):
    y = _likelihood_ratio(cfg)
    grid = cfg.get("n_grid", None)
    if isinstance(grid, dict):
        grid = np.unique(np.round(np.geomspace(float(grid.get("min", 1)), float(grid.get("max", 1e6)),
                                               int(grid.get("count", 61)))).astype(np.int64))
    probe = bounds.DeviationProbeConfig(cfg.get("delta", 0.3, float), cfg.get("p_alpha", 0.3, float),
                                        cfg.get("replications", 10_000, int), grid,
                                        cfg.get("n_bootstrap", 200, int))
    report = bounds.bound_report(y, probe.delta, probe.p_alpha, cfg.get("variant", "theorem"))
    crit = bounds.empirical_critical_n(y, probe, named_stream(seed, "nstar"))
    ok = bool(report.contains(crit.ln_n_star))
    _write_json(os.path.join(out, "nstar_report.json"),
                {"bound": report.to_dict(), "critical": crit.to_dict(), "bracket_ok": ok})
    return report, crit, ok


SUBCOMMANDS = {
    "entropy": (cmd_entropy, {"kind", "eta", "mu", "orders", "shift", "n_samples"}),
    "bound-sweep": (cmd_bound_sweep, {"delta", "p_alpha", "variant", "rows", "ks"}),
    "wlc-sweep": (cmd_wlc_sweep, {"pi", "hs", "h_min", "h_max", "h_step", "proposal_grid_resolution"}),
    "gibbs-fit": (cmd_gibbs_fit, {"pi", "values", "t0", "constraint"}),
    "smc": (cmd_smc, {"model", "beta", "particle_count", "n_stages", "ess_threshold", "move_steps",
                      "resampling", "n_replicas"}),
    "cross-entropy": (cmd_cross_entropy, {"pi", "values", "target_log_density", "n_samples", "beta0",
                                          "max_iter", "tol", "variant", "z_multiplier"}),
    "nstar": (cmd_nstar, {"distribution", "delta", "p_alpha", "replications", "n_grid",
                          "n_bootstrap", "variant"}),
}
COMMON_KEYS = {"seed", "output_dir"}


def build_parser():
    parser = argparse.ArgumentParser(prog="entropic-is",
                                     description="Entropy-based importance sampling experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="64-bit seed; overrides the config")
        p.add_argument("--out", help="output directory; overrides the config")
    return parser


def run(argv=None):
    """Parse arguments and run one subcommand; returns the exit code."""
    args = build_parser().parse_args(argv)
    func, keys = SUBCOMMANDS[args.command]
    try:
        cfg = load_config(args.config, keys | COMMON_KEYS)
        seed = args.seed if args.seed is not None else cfg.get("seed", None, int)
        if seed is None:
            raise ConfigError(f"{cfg.path}: a seed is required (config key 'seed' or --seed)")
        if not 0 <= seed < 2**64:
            raise ConfigError(f"{cfg.where('seed')}: seed must be an unsigned 64-bit integer")
        out = args.out or cfg.get("output_dir", ".")
        os.makedirs(out, exist_ok=True)
        func(cfg, seed, out)
    except NumericalFailure as exc:
        print(f"entropic-is {args.command}: numerical failure: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    except (ValueError, TypeError) as exc:
        print(f"entropic-is {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
