import sys

import numpy as np
import pytest

from mimo_dscat.channel import NetworkStatistics, exponential_corr, local_scattering_corr
from mimo_dscat.config import NetworkConfig


@pytest.fixture
def small_config():
    return NetworkConfig(M=16)


def single_link_stats(beta=1.0, M=4, S=21, angle=0.3, asd=10.0, r=0.5, L=1, K=1):
    """Network statistics where every link shares the same matrices."""
    R = local_scattering_corr(M, angle, asd)
    Rt = exponential_corr(S, r)
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (L, L, K)).copy()
    return NetworkStatistics.from_arrays(
        beta,
        np.broadcast_to(R, (L, L, K, M, M)).copy(),
        np.broadcast_to(Rt, (L, L, K, S, S)).copy(),
    )


def sample_cov(x):
    """Sample covariance E{x x^H} of rows of ``x`` (zero-mean assumed)."""
    return x.T @ x.conj() / x.shape[0]


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[key])
