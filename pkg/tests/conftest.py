import os

import numpy as np
import pytest

from models.congestion import CostMatrix, PerfTable
from models.fbs_model import FbsModel

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")

EXAMPLE_ACTIONS = [
    [[1, 2, 3], [3, 4, 5]],
    [[1, 2, 4], [3, 5], [4, 5]],
    [[1, 3, 4], [2, 5], [3, 5]],
]

TABLE1_PERF = [33, 27, 24, 26, 23, 25, 25, 22, 20, 28, 28, 26, 33, 13, 20, 29, 16, 19]
TABLE1_XI = [11, 2, 4, 0, 5, 6, 0, 3, 7, 2, 6, 3, 1, 3, 4]

ITEM2_PERF = [29, 25, 24, 28, 12, 18, 25, 24, 19, 27, 29, 24, 32, 19, 27, 25, 23, 22]
ITEM2_XI = [0.5, 0, 0.5, 1.5, 5, 2, 5, 0.5, 10, 11, 5, 3, 0, 0.5, 0]
ITEM2_XI0 = [
    0.4704, 0.1516, 0.0004, 1.5766, 4.6840, 1.1375,
    5.7214, 0.1263, 9.5267, 11.2585, 5.0109, 2.5485,
    0, 0, 0,
]
ITEM2_P0 = [
    29, 25, 23.9887, 28.8315, 12.5786, 17.4214, 24.3156, 23.7109, 19.1532,
    26.8641, 28.7218, 24.1641, 32.1142, 18.6828, 26.6329, 25.1359, 23.5674, 22.1170,
]


@pytest.fixture
def example_model():
    return FbsModel.from_actions(EXAMPLE_ACTIONS, n_facilities=5)


@pytest.fixture
def table1_model(example_model):
    return example_model.with_perf(TABLE1_PERF)


@pytest.fixture
def item2_model(example_model):
    return example_model.with_perf(ITEM2_PERF)


@pytest.fixture
def table1_xi():
    return CostMatrix.from_flat(TABLE1_XI, 5, 3)


@pytest.fixture
def item2_xi():
    return CostMatrix.from_flat(ITEM2_XI, 5, 3)


@pytest.fixture
def table1_perf():
    return PerfTable(np.array(TABLE1_PERF, dtype=float))


@pytest.fixture
def item2_perf():
    return PerfTable(np.array(ITEM2_PERF, dtype=float))


@pytest.fixture
def data_path():
    def _path(name):
        return os.path.join(DATA_DIR, name)

    return _path


def random_model(rng, max_players=4, max_facilities=6, max_actions=4):
    """Small random facility-based system (empty actions allowed)."""
    n = int(rng.integers(1, max_players + 1))
    m = int(rng.integers(1, max_facilities + 1))
    actions = []
    for _ in range(n):
        size = int(rng.integers(1, max_actions + 1))
        action_set = []
        for _ in range(size):
            mask = rng.random(m) < 0.5
            action_set.append([j + 1 for j in np.flatnonzero(mask)])
        actions.append(action_set)
    return FbsModel.from_actions(actions, n_facilities=m)
