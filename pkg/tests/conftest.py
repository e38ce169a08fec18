import numpy as np
import pytest

from nbiot.grid import CellConfig
from nbiot.numerology import DeploymentConfig, DeploymentMode


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def standalone_cell():
    return CellConfig(nb_pcid=17)


@pytest.fixture
def inband_cell():
    dep = DeploymentConfig(DeploymentMode.INBAND, lte_bandwidth_mhz=10, prb_index=30)
    return CellConfig(nb_pcid=17, deployment=dep, lte_crs_ports=4)


@pytest.fixture
def guardband_cell():
    return CellConfig(nb_pcid=5, deployment=DeploymentConfig(DeploymentMode.GUARDBAND,
                                                             lte_bandwidth_mhz=10))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance line; the terminal summary lists them all."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, ok, detail=""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        lines.append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
