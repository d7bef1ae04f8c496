import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from timomem.kernel import BeamParams, PowerLawKernel

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# Lines collected by the acceptance tests; printed in the terminal summary so
# they show up even when pytest captures stdout.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def unit_beam():
    return BeamParams(1.0, 1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def equal_speed_beam():
    """kappa/rho1 = b/rho2 = 1 with rho2 large enough that C0 = 31/32."""
    return BeamParams(rho1=1.0, rho2=4.0, b=4.0, kappa=1.0, L=1.0)


@pytest.fixture
def nu3_kernel():
    return PowerLawKernel(a=1.94, nu=3.0)


@pytest.fixture(autouse=True)
def _quiet_cfl_hint():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*CFL hint.*")
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
