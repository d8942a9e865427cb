import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semiparam.chain import KinematicChain, load_chain

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def planar2():
    return load_chain(CONFIGS / "planar2.yaml")


@pytest.fixture(scope="session")
def lwr7():
    return load_chain(CONFIGS / "lwr7.yaml")


@pytest.fixture(scope="session")
def pendulum():
    """Single joint about z, gravity along -y."""
    return KinematicChain(axes=[[0, 0, 1]], rotations=[np.eye(3)], translations=[[0, 0, 0]],
                          gravity=[0.0, -9.81, 0.0],
                          pi_reference=[1.5, 0.3, 0.1, 0.0, 0.01, 0, 0, 0.02, 0, 0.09, 0.2, 0.1],
                          name="pendulum")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
