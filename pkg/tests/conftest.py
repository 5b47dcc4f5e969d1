import numpy as np
import pytest

from rcakit.core import CausalGraph, Dataset, Edge
from rcakit.datagen import VarModel, gen_var


def sem_data(nodes, weighted_edges, length=10000, seed=0, lag_weight=0.0):
    """Dataset from the structural VAR generator with hand-picked weights."""
    dag = CausalGraph(nodes, [Edge(a, b) for a, b, _ in weighted_edges])
    model = VarModel(dag, {(a, b): w for a, b, w in weighted_edges}, {n: 1.0 for n in nodes}, lag_weight)
    data, _ = gen_var(model, length, seed=seed)
    return data, dag


@pytest.fixture(scope="session")
def chain_data():
    return sem_data(["x", "y", "z"], [("x", "y", 1.0), ("y", "z", 1.0)], seed=11)


@pytest.fixture(scope="session")
def collider_data():
    return sem_data(["x", "y", "z"], [("x", "z", 1.0), ("y", "z", 1.0)], seed=12)


def gaussian(names, length, seed):
    rng = np.random.default_rng(seed)
    return Dataset(tuple(names), rng.standard_normal((length, len(names))))


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
