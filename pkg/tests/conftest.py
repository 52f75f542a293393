import numpy as np
import pytest

from piiw.env import GridEnv, load_map

OPEN_MAP = """
#######
#.....#
#.S...#
#..K..#
#....D#
#######
"""


@pytest.fixture
def open_env():
    return GridEnv(load_map(OPEN_MAP, name="open"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
