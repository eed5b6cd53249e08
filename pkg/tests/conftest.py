import numpy as np
import pytest
from scipy.linalg import eigh

from probelogdet import GridSpec, Hyperparams, build_precision


def grid_q(shape, kappa=1.0, tau=1.0, boundary="neumann"):
    return build_precision(GridSpec(shape, boundary), Hyperparams(kappa, tau))


def dense_logm(Q):
    lam, U = eigh(Q.toarray())
    return (U * np.log(lam)) @ U.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
