import math

import numpy as np
import pytest
from scipy.optimize import minimize

from entropic_is import gibbs, wlc
from entropic_is.entropy import kl_vectors, relative_entropy_finite
from entropic_is.exceptions import DomainError, EmptyFeasibleSet, QuadratureFailure
from entropic_is.measures import FiniteDistribution

PI = FiniteDistribution.from_probs([0.7, 0.3])
UNIFORM2 = FiniteDistribution.from_probs([0.5, 0.5])


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def test_value_singleton_budget():
    mu = FiniteDistribution.from_probs([0.4, 0.6])
    value, worst = wlc.wlc_value_grid(wlc.WlcProblem(PI, 0.0), mu)
    assert value == pytest.approx(relative_entropy_finite(PI, mu), abs=1e-9)
    assert tv(worst.probs, PI.probs) < 1e-9


def test_value_large_budget_uniform_proposal():
    for h in (-math.log(0.3), 1.5, 3.0):
        value, _ = wlc.wlc_value_grid(wlc.WlcProblem(PI, h), UNIFORM2)
        assert value == pytest.approx(-math.log(0.5) - h, abs=1e-4)
        exact, _ = wlc.two_atom_wlc_value(PI, UNIFORM2, h)
        assert exact == pytest.approx(-math.log(0.5) - h, abs=1e-12)


def _slsqp_value(pi, mu, h, starts, rng):
    """Independent maximizer of Ent(eta|mu) over Ent(eta|pi) <= h by multistart SLSQP."""
    k = pi.size
    cons = [{"type": "ineq", "fun": lambda e: h - kl_vectors(np.clip(e, 1e-300, None), pi)},
            {"type": "eq", "fun": lambda e: e.sum() - 1.0}]
    best = -np.inf
    for _ in range(starts):
        x0 = rng.dirichlet(np.ones(k))
        x0 = pi + 0.5 * (x0 - pi)
        res = minimize(lambda e: -kl_vectors(np.clip(e, 1e-300, None), mu), x0,
                       bounds=[(0.0, 1.0)] * k, constraints=cons, method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 500})
        if res.success and h - kl_vectors(np.clip(res.x, 1e-300, None), pi) >= -1e-9:
            best = max(best, -res.fun)
    return best - h


def test_three_atom_value_cross_oracle():
    rng = np.random.default_rng(0)
    for _ in range(3):
        pi = FiniteDistribution.from_probs(rng.dirichlet(np.ones(3) * 2))
        value, worst = wlc.wlc_value_grid(wlc.WlcProblem(pi, 0.5), pi)
        other = _slsqp_value(pi.probs, pi.probs, 0.5, 50, rng)
        assert value == pytest.approx(other, abs=1e-4)
        assert relative_entropy_finite(worst, pi) <= 0.5 + 1e-6


@pytest.mark.parametrize("h,expected", [(0.1, "reference"), (1.5, "uniform"), (10.0, "uniform")])
def test_two_atom_regimes_outer(h, expected):
    closed = wlc.two_atom_argmin(PI, h)
    grid = wlc.wlc_argmin_grid(wlc.WlcProblem(PI, h))
    assert tv(grid.proposal.probs, closed.proposal.probs) <= 1e-3
    assert wlc.regime_label(grid, PI) == expected


def test_two_atom_intermediate_branch(oracle):
    h = 0.7
    closed = wlc.two_atom_argmin(PI, h)
    assert closed.proposal.probs[0] == pytest.approx(oracle["two_atom_h07"]["pi_h_first"], abs=1e-10)
    assert relative_entropy_finite(closed.proposal, PI) == pytest.approx(h, abs=1e-10)
    assert closed.wlc_value == pytest.approx(oracle["two_atom_h07"]["pi_h_value"], abs=1e-9)
    exact = wlc.two_atom_minimax(PI, h)
    assert exact.proposal.probs[0] == pytest.approx(oracle["two_atom_h07"]["minimax_first"], abs=1e-10)
    assert exact.wlc_value == pytest.approx(oracle["two_atom_h07"]["minimax_value"], abs=1e-9)
    # the grid search agrees with the exact minimizer
    grid = wlc.wlc_argmin_grid(wlc.WlcProblem(PI, h))
    assert tv(grid.proposal.probs, exact.proposal.probs) <= 1e-3
    assert grid.wlc_value <= closed.wlc_value


def test_two_atom_relabelling():
    flipped = FiniteDistribution.from_probs([0.3, 0.7])
    a = wlc.two_atom_argmin(PI, 0.7).proposal.probs
    b = wlc.two_atom_argmin(flipped, 0.7).proposal.probs
    np.testing.assert_allclose(a, b[::-1], atol=1e-12)


def test_sweep_switches_at_thresholds():
    hs = np.arange(0.0, 2.0001, 0.01)
    rows = wlc.wlc_sweep(PI, hs, proposal_grid_resolution=100)
    labels = [r["regime"] for r in rows]
    switches = [hs[i] for i in range(1, len(hs)) if labels[i] != labels[i - 1]]
    assert len(switches) == 2
    assert abs(switches[0] + math.log(0.7)) <= 0.01
    assert abs(switches[1] + math.log(0.3)) <= 0.01


def test_argmin_three_atoms():
    pi = FiniteDistribution.from_probs([0.5, 0.3, 0.2])
    sol = wlc.wlc_argmin_grid(wlc.WlcProblem(pi, 3.0), proposal_grid_resolution=60,
                              target_resolution=40)
    # budget covers every distribution: the uniform proposal is optimal
    assert tv(sol.proposal.probs, np.full(3, 1 / 3)) <= 1e-3
    with pytest.raises(ValueError):
        wlc.wlc_argmin_grid(wlc.WlcProblem(FiniteDistribution.from_probs([0.25] * 4), 1.0))


def test_constrained_problem_budget():
    pi = FiniteDistribution.from_probs([0.2, 0.3, 0.5])
    T = np.array([[0.0], [1.0], [2.0]])
    C = gibbs.ConvexMomentSet.box([0.2], [0.6])
    problem = wlc.WlcProblem(pi, 0.1, T, C)
    assert problem.h_star > 0
    assert C.contains(problem.mu_star.probs @ T, tol=1e-8)
    with pytest.raises(EmptyFeasibleSet):
        wlc.wlc_value_grid(problem.with_h(problem.h_star / 2), pi)
    value, worst = wlc.wlc_value_grid(problem.with_h(problem.h_star + 0.2), problem.mu_star)
    assert C.contains(worst.probs @ T, tol=1e-9)
    # mu_star itself is admissible, and the Pythagorean inequality caps the value at -h_star
    assert -problem.h_star - 0.2 <= value <= -problem.h_star + 1e-9


def test_solution_json_roundtrip():
    sol = wlc.two_atom_argmin(PI, 0.7)
    back = wlc.WlcSolution.from_json(sol.to_json())
    np.testing.assert_array_equal(back.proposal.probs, sol.proposal.probs)
    assert back.wlc_value == sol.wlc_value


def test_decomposition_residual():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p, q, r = (FiniteDistribution.from_probs(rng.dirichlet(np.ones(5))) for _ in range(3))
        assert abs(wlc.decomposition_residual(p, q, r)) <= 1e-12


def test_strip_monotone_f():
    st = wlc.build_strip_target(lambda x: x[:, 1], math.log(2), n_grid=256)
    assert st.entropy_wrt_reference() == pytest.approx(math.log(2), abs=1e-12)
    assert st.expectation() == pytest.approx(0.75, abs=1e-12)
    assert st.reference_expectation() == pytest.approx(0.5, abs=1e-12)
    assert st.pushforward_error() <= 1e-15


def test_strip_constant_f():
    st = wlc.build_strip_target(lambda x: np.ones(len(x)), 1.0, n_grid=256)
    assert st.entropy_wrt_reference() == pytest.approx(1.0, abs=1e-6)
    assert st.expectation() == pytest.approx(st.reference_expectation(), abs=1e-12)


def test_strip_failures():
    with pytest.raises(QuadratureFailure):
        wlc.build_strip_target(lambda x: x[:, 0], 10.0, n_grid=64)
    with pytest.raises(DomainError):
        wlc.build_strip_target(lambda x: x[:, 0], -1.0, n_grid=64)


def test_lower_bound_check_optimal_proposal():
    check = wlc.proposal_lower_bound_check(lambda x: np.ones(len(x)), 1.0, n_grid=256)
    assert check.slack == pytest.approx(0.0, abs=1e-12)


def test_lower_bound_check_steep_tilt():
    for h in (0.5, 1.0, 2.0):
        check = wlc.proposal_lower_bound_check(lambda x: np.exp(3 * x[:, 1]), h, n_grid=512)
        assert check.slack > 1e-3
