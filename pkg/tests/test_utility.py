import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evidl.belief import Frame
from evidl.errors import CatalogTooLarge, ValidationError
from evidl.utility import (
    Act,
    build_catalog,
    extend_utility_matrix,
    meowa_weights,
    read_original_utilities,
    read_utility_csv,
    tolerance_degree,
    write_utility_csv,
)


def entropy(w):
    w = np.asarray(w)
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


@pytest.mark.parametrize("n,gamma", [(2, 0.8), (3, 0.8), (4, 0.6), (5, 0.95), (7, 0.5)])
def test_meowa_satisfies_constraints(n, gamma):
    w = meowa_weights(n, gamma)
    assert sum(w.weights) == pytest.approx(1.0, abs=1e-12)
    assert w.tdi() == pytest.approx(gamma, abs=1e-10)
    assert min(w.weights) >= 0


@pytest.mark.parametrize("n,gamma", [(3, 0.8), (4, 0.7), (6, 0.9)])
def test_meowa_beats_random_feasible_weights(n, gamma):
    """Project random points onto the two equality constraints and compare entropy."""
    best = meowa_weights(n, gamma)
    rng = np.random.default_rng(n)
    A = np.vstack([np.ones(n), (n - np.arange(1, n + 1)) / (n - 1)])
    b = np.array([1.0, gamma])
    w0 = np.asarray(best.weights)
    _, _, vt = np.linalg.svd(A)
    null = vt[2:].T
    checked = 0
    for _ in range(3000):
        cand = w0 + null @ rng.normal(scale=w0.min(), size=null.shape[1])
        if np.any(cand < 0):
            continue
        np.testing.assert_allclose(A @ cand, b, atol=1e-12)
        assert entropy(cand) <= best.entropy() + 1e-12
        checked += 1
    assert checked > 50


def test_meowa_endpoints():
    assert meowa_weights(4, 1.0).weights == pytest.approx((1, 0, 0, 0))
    assert meowa_weights(4, 0.5).weights == pytest.approx((0.25,) * 4)
    assert meowa_weights(1, 0.7).weights == (1.0,)
    with pytest.raises(ValidationError):
        meowa_weights(3, 0.4)


def test_known_weights_three():
    w = meowa_weights(3, 0.8).weights
    assert w == pytest.approx((0.6819, 0.2363, 0.0819), abs=5e-5)
    assert tolerance_degree(w) == pytest.approx(0.8)


def test_catalog_order_and_membership():
    cat = build_catalog(3, "all")
    assert [a.members for a in cat] == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    assert cat.omega_index == 6
    assert cat.singleton_indices == [0, 1, 2]
    sel = build_catalog(4, "selected", [[1, 0], [2, 3]])
    assert [a.members for a in sel.multi_class_acts()] == [(0, 1), (2, 3)]
    assert len(sel) == 7
    with pytest.raises(CatalogTooLarge):
        build_catalog(21, "all")
    with pytest.raises(ValidationError):
        build_catalog(3, "selected", [[0, 5]])
    with pytest.raises(ValidationError):
        build_catalog(3, "sideways")


def test_act_names(frame3):
    cat = build_catalog(3, "all")
    assert cat.names(frame3)[3] == "a+b"
    assert cat.act_by_name("c+a", frame3) == Act((0, 2))


def test_extended_matrix_general_utilities():
    U = np.array([[1.0, 0.2, 0.0], [0.3, 1.0, 0.1], [0.0, 0.4, 1.0]])
    eum = extend_utility_matrix(U, build_catalog(3, "all"), 0.8)
    g2 = meowa_weights(2, 0.8).weights
    # column 1 of the pair {0, 1}: values 0.2 and 1.0 sorted descending
    assert eum.row(Act((0, 1)))[1] == pytest.approx(g2[0] * 1.0 + g2[1] * 0.2)
    np.testing.assert_array_equal(eum.singleton_rows(), U)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 1.0))
def test_set_rows_monotone_in_gamma(gamma):
    eum_lo = extend_utility_matrix(np.eye(4), build_catalog(4, "all"), 0.5)
    eum = extend_utility_matrix(np.eye(4), build_catalog(4, "all"), gamma)
    assert np.all(eum.extended >= eum_lo.extended - 1e-12)


def test_rejects_bad_utilities():
    with pytest.raises(ValidationError):
        extend_utility_matrix(np.eye(3) * 2, build_catalog(3, "all"), 0.8)
    with pytest.raises(ValidationError):
        extend_utility_matrix(np.eye(2), build_catalog(3, "all"), 0.8)


def test_utility_csv_round_trip(tmp_path, frame3):
    eum = extend_utility_matrix(np.eye(3), build_catalog(3, "all"), 0.8)
    path = tmp_path / "u.csv"
    write_utility_csv(path, eum, frame3)
    acts, values = read_utility_csv(path, frame3)
    assert acts == list(eum.catalog.acts)
    np.testing.assert_array_equal(values, eum.extended)
    np.testing.assert_array_equal(read_original_utilities(path, frame3), np.eye(3))
    with pytest.raises(ValidationError):
        read_utility_csv(path, Frame(("x", "y", "z")))
