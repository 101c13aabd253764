import numpy as np
import pytest

import mc_runs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def ar1_dense(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)


def pytest_terminal_summary(terminalreporter):
    if mc_runs.ACCEPTANCE_LOG:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in mc_runs.ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
