import numpy as np
import pytest

from qkinetics.kmc import ChannelTable, ModeLattice, enumerate_channels

# six axis modes plus a diagonal pair; three exact collision channels
ACCEPTANCE_MODES = [
    (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1), (1, 1, 0), (-1, -1, 0),
]
ACCEPTANCE_INITIAL = [11, 11, 0, 0, 0, 0, 1, 1]  # N = 24, E = 26, P = 0


@pytest.fixture(scope="session")
def small_lattice():
    return ModeLattice(np.array(ACCEPTANCE_MODES))


@pytest.fixture(scope="session")
def small_table(small_lattice):
    return ChannelTable.build(small_lattice)


@pytest.fixture(scope="session")
def cube1():
    return ModeLattice.cube(1)


@pytest.fixture(scope="session")
def cube1_table(cube1):
    return ChannelTable.build(cube1)


@pytest.fixture(scope="session")
def cube1_channels(cube1_table):
    return cube1_table.channels


@pytest.fixture(scope="session")
def four_mode_lattice():
    return ModeLattice(np.array([(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)]))


@pytest.fixture(scope="session")
def four_mode_channels(four_mode_lattice):
    return enumerate_channels(four_mode_lattice)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
