import numpy as np
import pytest

from squintlab.array import ArrayConfig
from squintlab.channel import SubcarrierGrid

FIG2 = dict(n_antennas=128, n_rf=8, n_subcarriers=32, carrier_hz=300e9, bandwidth_hz=30e9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fig2_array():
    return ArrayConfig(FIG2["n_antennas"], FIG2["carrier_hz"])


@pytest.fixture
def fig2_grid():
    return SubcarrierGrid(FIG2["n_subcarriers"], FIG2["carrier_hz"], FIG2["bandwidth_hz"])


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
