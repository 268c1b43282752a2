"""How outliers reach the whole-frame act on the desk benchmark.

With vacuous evidence the frame act scores the Omega-row OWA value (0.6819
at gamma = 0.8) and any singleton scores 1 - nu, so outliers flip to Omega
once nu exceeds about 0.318.
"""

import numpy as np
import pytest

from evidl.evaluation import evaluate
from evidl.io import synth_blobs
from evidl.utility import meowa_weights
from test_acceptance import TEST_SEED, bench_model


@pytest.fixture(scope="module")
def bench():
    model, train_ds, _ = bench_model()
    test_ds = synth_blobs(3, 100, 2, 4.0, outliers=300, seed=TEST_SEED)
    return model, test_ds


def test_outliers_carry_near_vacuous_mass(bench):
    model, test_ds = bench
    m = model.masses(test_ds.X[test_ds.y == -1])
    assert np.all(m[:, -1] > 0.99)


@pytest.mark.parametrize("nu", [0.4, 0.5, 0.7, 1.0])
def test_separation_above_threshold(bench, nu):
    model, test_ds = bench
    r = evaluate(model, test_ds.X, test_ds.y, gamma=0.8, nu=nu)
    assert r.omega_rate_outliers >= r.omega_rate_inliers + 0.3


@pytest.mark.parametrize("nu", [0.0, 0.1, 0.2, 0.3])
def test_no_outlier_rejection_below_threshold(bench, nu):
    model, test_ds = bench
    threshold = 1.0 - meowa_weights(3, 0.8).weights[0]
    assert nu < threshold
    r = evaluate(model, test_ds.X, test_ds.y, gamma=0.8, nu=nu)
    assert r.omega_rate_outliers == 0.0
