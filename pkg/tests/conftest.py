import sys

import numpy as np
import pytest

from evidl.belief import Frame
from evidl.dslayer import PrototypeBank
from evidl.featurenet import FeatureNet
from evidl.model import EvidentialClassifier


def random_bank(rng, frame, n, dim):
    return PrototypeBank(
        frame,
        rng.normal(size=(n, dim)),
        rng.uniform(0.3, 1.2, n),
        rng.normal(size=n),
        rng.normal(size=(n, frame.size)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def frame3():
    return Frame(("a", "b", "c"))


@pytest.fixture
def small_model(rng, frame3):
    """Dense tanh net feeding a 4-prototype DS layer."""
    net = FeatureNet.build((4,), [{"type": "dense", "units": 3, "activation": "tanh"}], seed=3)
    bank = random_bank(rng, frame3, 4, 3)
    return EvidentialClassifier(frame3, net, bank, np.eye(3), gamma=0.8, nu=0.4)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
