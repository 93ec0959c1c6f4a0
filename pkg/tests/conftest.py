import numpy as np
import pytest

from habmod.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def small_synth():
    """3 formations x 4 leaves, 40 rows per leaf."""
    spec = SyntheticSpec(samples_per_leaf=40, seed=3)
    return generate_synthetic(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FAST_FOREST = {"family": "forest", "class_weight": "inverse_frequency", "params": {"n_trees": 8, "max_depth": 6}}
FAST_BOOST = {"family": "boosting", "params": {"n_rounds": 8, "max_depth": 3}}
FAST_MLP = {"family": "mlp", "params": {"epochs": 15}, "loss": {"loss": "WCE", "weights": "inverse_frequency"}}


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
