import json
from pathlib import Path

import numpy as np
import pytest

from zcurve_fdr import ZObservation, p_to_z

FIXTURES = Path(__file__).parent / "fixtures"


def significant_z(mu, n, seed, alpha=0.05):
    """``n`` absolute z-values from N(mu, 1) kept only when significant."""
    rng = np.random.default_rng(seed)
    c = p_to_z(alpha)
    out = np.empty(0)
    while out.size < n:
        z = np.abs(rng.normal(mu, 1.0, 4 * n + 100))
        out = np.concatenate([out, z[z >= c]])
    return out[:n]


def exact_obs(z):
    return [ZObservation(float(v), float(v)) for v in z]


@pytest.fixture(scope="session")
def corpus_path():
    return FIXTURES / "corpus.jsonl"


@pytest.fixture(scope="session")
def extraction_fixtures():
    with open(FIXTURES / "extraction_fixtures.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def high_power_obs():
    return exact_obs(significant_z(4.5, 400, seed=11))


@pytest.fixture(scope="session")
def null_obs():
    return exact_obs(significant_z(0.0, 400, seed=12))


# acceptance criteria report one line each; printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
