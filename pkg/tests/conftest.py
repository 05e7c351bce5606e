import itertools
import os
import sys

import pytest

# Ensure project root is on sys.path so tests can import modules
PROJECT_ROOT = os.path.dirname(os.path.abspath(os.path.join(__file__, '..')))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from bnmodel import load_model, sample  # noqa: E402
from dataset import CATEGORICAL, Dataset  # noqa: E402
from graph import Dag, is_acyclic  # noqa: E402

MODELS_DIR = os.path.join(PROJECT_ROOT, "models")


def model_path(name: str) -> str:
    return os.path.join(MODELS_DIR, f"{name}.json")


def all_dags(labels):
    """Every DAG over the labels (543 for four nodes)."""
    pairs = list(itertools.combinations(range(len(labels)), 2))
    for states in itertools.product((None, "fwd", "back"), repeat=len(pairs)):
        arcs = []
        for (a, b), state in zip(pairs, states):
            if state == "fwd":
                arcs.append((a, b))
            elif state == "back":
                arcs.append((b, a))
        dag = Dag(labels, arcs)
        if is_acyclic(dag):
            yield dag


@pytest.fixture
def models_dir():
    return MODELS_DIR


@pytest.fixture(scope="session")
def asia_model():
    return load_model(model_path("asia"))


@pytest.fixture(scope="session")
def asia_10k(asia_model):
    return sample(asia_model, 10000, seed=1)


@pytest.fixture(scope="session")
def gauss_model():
    return load_model(model_path("gauss6"))


@pytest.fixture
def xor_data():
    # A, B balanced and independent, C = A xor B; every pairwise dependence is exactly zero
    rows = [(a, b, a ^ b) for a, b in itertools.product((0, 1), repeat=2) for _ in range(50)]
    columns = [[str(r[j]) for r in rows] for j in range(3)]
    return Dataset.from_columns(["A", "B", "C"], columns, CATEGORICAL)


@pytest.fixture
def collider_data():
    # A, B independent binary, C = A + B as a ternary child, 100 rows per parent combination
    rows = [(f"a{a}", f"b{b}", f"c{a + b}") for a, b in itertools.product((0, 1), repeat=2) for _ in range(100)]
    columns = [[r[j] for r in rows] for j in range(3)]
    return Dataset.from_columns(["A", "B", "C"], columns, CATEGORICAL)


@pytest.fixture
def independent_data():
    # full factorial over three binary variables: all (conditional) dependencies are exactly zero
    rows = [combo for combo in itertools.product("01", repeat=3) for _ in range(25)]
    columns = [[r[j] for r in rows] for j in range(3)]
    return Dataset.from_columns(["X", "Y", "Z"], columns, CATEGORICAL)
