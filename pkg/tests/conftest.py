import json
import os

import numpy as np
import pytest

from entropic_is.measures import FiniteDistribution

ORACLE_PATH = os.path.join(os.path.dirname(__file__), "oracles", "values.json")

# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def oracle():
    with open(ORACLE_PATH, encoding="utf-8") as fh:
        return json.load(fh)


def random_instance(rng, k_min=3, k_max=10, d_max=2):
    """Random finite reference, statistic table and target with full-rank T."""
    k = int(rng.integers(k_min, k_max + 1))
    d = int(rng.integers(1, min(d_max, k - 1) + 1))
    pi = FiniteDistribution.from_probs(rng.dirichlet(np.ones(k)))
    T = rng.standard_normal((k, d))
    eta = FiniteDistribution.from_probs(rng.dirichlet(np.ones(k)))
    return pi, T, eta


def random_pair(rng, k_max=10):
    k = int(rng.integers(2, k_max + 1))
    return rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  {detail}")
