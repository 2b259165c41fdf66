import numpy as np
import pytest

from rischannel.config import ScenarioConfig
from rischannel.em_kernel import assemble_partitioned
from rischannel.geometry import BasisFunction, Scene, StructureMesh, build_scene
from rischannel.ris_design import default_unit_cell_phases, optimize_binary_states

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def free_scene(tx=(), rx=(), ris=(), ground=False, height=0.25):
    return Scene(list(tx), list(rx), list(ris), ground, height, np.zeros(3), np.zeros(3), {})


def single_basis(center, axis=(0.0, 1.0, 0.0), half=0.25, radius=1e-4, group="TX", element_id=0):
    """One two-segment basis, i.e. a short PWS dipole of length ``2 * half``."""
    c = np.asarray(center, dtype=float)
    a = np.asarray(axis, dtype=float) * half
    starts = np.array([c - a, c])
    ends = np.array([c, c + a])
    return StructureMesh(starts, ends, np.full(2, radius),
                         [BasisFunction((0, 1), True, group, element_id)], 0, "dipole", c)


@pytest.fixture(scope="session")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def small_cfg():
    return ScenarioConfig(m_x=3, m_y=3)


@pytest.fixture(scope="session")
def small_scene(small_cfg):
    return build_scene(small_cfg)


@pytest.fixture(scope="session")
def small_zp(small_scene):
    return assemble_partitioned(small_scene)


@pytest.fixture(scope="session")
def default_scene(cfg):
    return build_scene(cfg)


@pytest.fixture(scope="session")
def default_zp(default_scene):
    return assemble_partitioned(default_scene)


@pytest.fixture(scope="session")
def design_30(default_scene):
    return optimize_binary_states(default_scene, default_unit_cell_phases("dipole"), 30.0)
