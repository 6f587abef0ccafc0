import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from topna.model import Deployment, RandomEvent, TaskParams  # noqa: E402


@pytest.fixture
def params():
    return TaskParams()


@pytest.fixture
def dep4():
    return Deployment.grid(4)


@pytest.fixture
def dep16():
    return Deployment.grid(16)


def make_event(size, capacity, cpu):
    return RandomEvent(float(size), np.asarray(capacity, dtype=float), np.asarray(cpu, dtype=float))


_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        for key, value in report.user_properties:
            if key == "criterion":
                _CRITERIA.append(value)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_CRITERIA, key=lambda v: int(v.split(":")[0])):
        terminalreporter.write_line(f"criterion {line}")
