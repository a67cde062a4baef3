import math

import numpy as np
import pytest

from rotorscan.geometry import Pose4, TurbineParams
from rotorscan.model import SamplingSpec, generate_turbine_model

# the default config scene: canonical H=45/R=30 turbine placed by this pose
TRUE_POSE = Pose4(32.0, 26.0, 0.0, -2.2)


@pytest.fixture(scope="session")
def canon():
    return TurbineParams(45.0, 30.0)


@pytest.fixture(scope="session")
def model(canon):
    return generate_turbine_model(canon, SamplingSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def brute_nn(q, pts):
    d = np.sqrt(((pts - q) ** 2).sum(axis=1))
    i = int(np.argmin(d))
    return i, float(d[i])


def rot_z(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


ACCEPTANCE_LINES = {}


def record_acceptance(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
