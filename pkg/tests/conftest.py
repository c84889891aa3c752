import sys

import numpy as np
import pytest

from flowpat.data import TEST1, Dataset
from flowpat.mlp import MlpTopology, init_model


def random_features(rng, n):
    """Physically valid random feature rows (not the synthetic generator)."""
    X = np.column_stack([
        rng.uniform(0.0, 5.0, n),          # vsl
        rng.uniform(0.0, 40.0, n),         # vsg
        rng.choice([0.0254, 0.0508], n),   # diameter
        rng.uniform(-90, 90, n),           # inclination
        rng.uniform(700, 1100, n),         # rho_l
        rng.uniform(1, 50, n),             # rho_g
        rng.uniform(1e-4, 1e-1, n),        # mu_l
        rng.uniform(1e-5, 3e-5, n),        # mu_g
        rng.uniform(0.01, 0.08, n),        # sigma
        rng.uniform(100, 1000, n),         # pressure
        rng.uniform(0, 90, n),             # temperature
    ])
    return X


def random_dataset(rng, n, scheme=TEST1, classes=None):
    classes = scheme.classes if classes is None else classes
    labels = rng.choice(np.array(classes, dtype=object), n)
    return Dataset(random_features(rng, n), labels, scheme)


def random_model(rng, sizes=None, classes=None):
    if sizes is None:
        depth = rng.integers(0, 4)
        sizes = [11] + [int(rng.integers(1, 26)) for _ in range(depth)] + [6]
    topology = MlpTopology(tuple(sizes))
    classes = classes or [f"c{i}" for i in range(sizes[-1])]
    model = init_model(topology, classes, int(rng.integers(0, 2**32)))
    biases = tuple(rng.normal(0, 0.5, b.shape) for b in model.biases)
    return model.replace(biases=biases)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
