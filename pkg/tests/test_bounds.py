import math

import numpy as np
import pytest
from scipy.stats import binom

from entropic_is import bounds
from entropic_is.entropy import relative_entropy_finite
from entropic_is.exceptions import DomainError, GridTooNarrow
from entropic_is.measures import FiniteDistribution

THREE = bounds.ThreePointParams(1e6, 1e-4, 0.01)
KEYS = ("ent", "ln_var", "gap", "slack_r", "theta_star", "dominance_ratio")


def two_atom_y(eps=1e-3):
    return bounds.LikelihoodRatio([0.0, 1.0 / eps], [1.0 - eps, eps])


def test_c_constant_examples(oracle):
    assert bounds.c_constant(0.5, 0.5) == pytest.approx(oracle["c_half_half"], rel=1e-15)
    assert bounds.c_constant(0.1, 0.1) == pytest.approx(oracle["c_tenth_tenth"], rel=1e-12)
    assert bounds.c_constant(0.3, 0.3) == pytest.approx(oracle["c_03_03"], rel=1e-12)
    assert bounds.c_constant(0.5, 0.3) == pytest.approx(oracle["c_05_03"], rel=1e-12)
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(DomainError):
            bounds.c_constant(bad, 0.5)


def test_slack_for_trivial_ratio():
    y = bounds.LikelihoodRatio([1.0], [1.0])
    c = bounds.c_constant(0.5, 0.5)
    theta, slack = bounds.slack_r(y, c)
    assert slack == pytest.approx(math.log(c), rel=1e-12)
    assert theta == pytest.approx(1.0)


@pytest.mark.parametrize("key,variant,delta,p", [
    ("three_point_half", "theorem", 0.5, 0.5),
    ("three_point_half_corollary", "corollary", 0.5, 0.5),
    ("three_point_03", "theorem", 0.3, 0.3),
])
def test_three_point_report_matches_oracle(oracle, key, variant, delta, p):
    rep = bounds.three_point_report(THREE, delta, p, variant)
    for k in KEYS:
        assert rep[k] == pytest.approx(oracle[key][k], rel=1e-9, abs=1e-9), k


def test_three_point_ent_matches_finite_kl():
    y = THREE.likelihood_ratio()
    mu = FiniteDistribution.from_probs(y.probs)
    eta = FiniteDistribution.from_probs(y.probs * y.values)
    assert y.ent() == pytest.approx(relative_entropy_finite(eta, mu), abs=1e-12)
    assert bounds.three_point_report(THREE)["ent"] == pytest.approx(y.ent(), abs=1e-12)


def test_three_point_closed_form_ratio():
    y = THREE.likelihood_ratio()
    for theta in (0.1, 0.5, 0.9):
        assert bounds.three_point_ratio(THREE, theta) == pytest.approx(y.gap(theta), rel=1e-10)


def test_golden_section_against_fine_grid():
    y = THREE.likelihood_ratio()
    c = bounds.c_constant(0.3, 0.3)
    _, slack = bounds.slack_r(y, c)
    thetas = np.geomspace(bounds.THETA_MIN, 1.0, 10_000)
    brute = min(y.gap(t) + math.log(c) / t for t in thetas)
    assert slack <= brute + 1e-12
    assert brute - slack <= 1e-6


def test_slack_from_profile_and_callable():
    y = THREE.likelihood_ratio()
    c = bounds.c_constant(0.5, 0.5)
    _, direct = bounds.slack_r(y, c)
    _, via_callable = bounds.slack_r(y.gap, c)
    assert via_callable == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ValueError):
        bounds.slack_r(y, c, variant="lemma")


def test_degenerate_three_point_gap():
    rep = bounds.three_point_report(bounds.ThreePointParams(1.0 + 1e-9, 1.0 - 1e-9, 0.999999))
    assert abs(rep["gap"]) < 1e-6


def test_dominance_sweep_values(oracle):
    rows = bounds.dominance_sweep()
    assert len(rows) == 9
    for got, want in zip(rows, oracle["dominance_sweep"]):
        for k in KEYS:
            assert got[k] == pytest.approx(want[k], rel=1e-9, abs=1e-9), k
    ratios = [r["dominance_ratio"] for r in rows]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_bound_report_roundtrip():
    rep = bounds.bound_report(two_atom_y(), 0.5, 0.3)
    lo, hi = rep.ln_nstar_interval
    assert lo < rep.ent < hi
    assert rep.contains(rep.ent)
    back = bounds.BoundReport.from_json(rep.to_json())
    assert back == rep


def test_two_atom_bound_values(oracle):
    y = two_atom_y()
    assert y.ent() == pytest.approx(oracle["two_atom_y_ent"], abs=1e-12)
    rep = bounds.bound_report(y, 0.5, 0.3)
    assert rep.slack_r == pytest.approx(oracle["two_atom_y_slack_05_03"], rel=1e-9)


def test_likelihood_ratio_validation():
    with pytest.raises(DomainError):
        bounds.LikelihoodRatio([0.5, 2.0], [0.5, 0.5])
    with pytest.raises(DomainError):
        bounds.LikelihoodRatio([-1.0, 3.0], [0.5, 0.5])


def test_binomial_tail_oracle(oracle):
    """Deviation probabilities of the two-atom ratio against exact binomial tails."""
    eps = 1e-3
    y = two_atom_y(eps)
    rng = np.random.default_rng(0)
    m = 10_000
    for n, p_exact in oracle["two_atom_y"]["p_dev_at"].items():
        n = int(n)
        # |K/(n eps) - 1| >= 0.5 with K ~ Binomial(n, eps)
        k = np.arange(n + 1)
        dev = np.abs(k / (n * eps) - 1.0) >= 0.5
        assert binom.pmf(k, n, eps)[dev].sum() == pytest.approx(p_exact, abs=1e-12)
        p_hat = np.mean(np.abs(y.sample_means(rng, n, m) - 1.0) >= 0.5)
        se = math.sqrt(max(p_exact * (1 - p_exact), 1e-4) / m)
        assert abs(p_hat - p_exact) <= 4 * se


def test_empirical_critical_n_two_atom():
    y = two_atom_y()
    cfg = bounds.DeviationProbeConfig(0.5, 0.3, replications=2000, n_bootstrap=50)
    crit = bounds.empirical_critical_n(y, cfg, rng=1)
    assert np.all(np.diff(crit.p_dev_monotone) <= 1e-12)
    lo, hi = crit.ci
    assert lo <= crit.n_star <= hi
    assert bounds.bound_report(y, 0.5, 0.3).contains(crit.ln_n_star)
    back = bounds.CriticalSampleSize.from_dict(crit.to_dict())
    assert back.n_star == crit.n_star


def test_empirical_critical_n_flags():
    cfg = bounds.DeviationProbeConfig(0.5, 0.3, replications=1000, n_bootstrap=10)
    crit = bounds.empirical_critical_n(bounds.LikelihoodRatio([1.0], [1.0]), cfg, rng=2)
    assert crit.no_deviation_ever and crit.n_star == 1.0
    narrow = bounds.DeviationProbeConfig(0.5, 0.3, replications=1000, n_grid=[1, 2, 3])
    with pytest.raises(GridTooNarrow):
        bounds.empirical_critical_n(two_atom_y(), narrow, rng=3)
    with pytest.raises(DomainError):
        bounds.DeviationProbeConfig(0.5, 0.3, replications=999)


def test_empirical_critical_n_callable_sampler():
    y = two_atom_y()
    cfg = bounds.DeviationProbeConfig(0.5, 0.3, replications=1000, n_bootstrap=20,
                                      n_grid=np.unique(np.geomspace(10, 1e5, 25).astype(int)))
    crit = bounds.empirical_critical_n(y.sample, cfg, rng=4)
    assert bounds.bound_report(y, 0.5, 0.3).contains(crit.ln_n_star)
    with pytest.raises(DomainError):
        bounds.empirical_critical_n(lambda r, n: np.full(n, 2.0), cfg, rng=5)
