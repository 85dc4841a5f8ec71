import math

import numpy as np
import pytest

from hfce.dictionary import build_joint
from hfce.estimators import DiffusionTable
from hfce.geometry import ArrayConfig


@pytest.fixture(scope="session")
def arr200():
    """The simulated array: 200 elements, 30 GHz, half-wavelength spacing."""
    return ArrayConfig.half_wavelength(200, 0.01)


@pytest.fixture(scope="session")
def joint200(arr200):
    return build_joint(arr200, 4)


@pytest.fixture(scope="session")
def table200(joint200, arr200):
    return DiffusionTable(joint200, arr200)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def deg(x):
    return math.radians(x)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
