import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evidl.belief import Frame, MassVector, hurwicz_expectation
from evidl.decision import (
    argmax_act_index,
    decide,
    decision_backward,
    expected_utilities,
    expected_utility_matrix,
    probabilistic_baseline_decide,
    probabilistic_expected_utilities,
    singleton_backward,
    write_expected_utilities_csv,
)
from evidl.errors import ValidationError
from evidl.utility import Act, build_catalog, extend_utility_matrix

FRAME = Frame(("a", "b", "c"))
EUM = extend_utility_matrix(np.eye(3), build_catalog(3, "all"), 0.8)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 4, elements=st.floats(0.0, 1.0)).filter(lambda v: v.sum() > 1e-3), st.floats(0.0, 1.0))
def test_matrix_form_agrees_with_hurwicz(raw, nu):
    m = MassVector.from_array(FRAME, raw / raw.sum())
    eu = expected_utilities(m, EUM, nu)
    for k, act in enumerate(EUM.catalog):
        assert eu.values[k] == pytest.approx(hurwicz_expectation(m, EUM.row(act), nu), abs=1e-12)


def test_worked_decisions():
    m = MassVector(FRAME, [0.45, 0.45, 0.05], 0.05)
    d = decide(expected_utilities(m, EUM, 1.0))
    # pair: 0.8 * 0.9 = 0.72, whole frame: 0.6819, singletons: 0.45
    assert d.act == Act((0, 1))
    assert d.expected_utility == pytest.approx(0.72)
    vague = MassVector(FRAME, [0.4, 0.4, 0.0], 0.2)
    assert decide(expected_utilities(vague, EUM, 1.0)).act == Act((0, 1, 2))


def test_ties_prefer_precise_acts():
    values = np.array([[0.5, 0.5 + 1e-14, 0.1, 0.5]])
    assert argmax_act_index(values)[0] == 0
    assert argmax_act_index(np.array([[0.1, 0.2, 0.2 - 1e-9]]))[0] == 1


def test_nu_range_checked():
    with pytest.raises(ValidationError):
        expected_utility_matrix(np.array([[0.5, 0.5, 0, 0]]), np.eye(3), 1.2)


def test_singleton_backward_finite_differences():
    rng = np.random.default_rng(0)
    U = rng.uniform(size=(3, 3))
    m = rng.dirichlet(np.ones(4), size=2)
    g = rng.normal(size=(2, 3))
    nu = 0.3
    analytic = singleton_backward(g, U, nu)
    step = 1e-6
    for n in range(2):
        for k in range(4):
            up, down = m.copy(), m.copy()
            up[n, k] += step
            down[n, k] -= step
            num = np.sum(g * (expected_utility_matrix(up, U, nu) - expected_utility_matrix(down, U, nu))) / (2 * step)
            assert analytic[n, k] == pytest.approx(num, abs=1e-8)
    single = decision_backward(MassVector.from_array(FRAME, m[0]), EUM, nu, g[0])
    np.testing.assert_allclose(single, singleton_backward(g[:1], np.eye(3), nu)[0])


def test_probabilistic_baseline():
    p = np.array([0.45, 0.45, 0.10])
    vals = probabilistic_expected_utilities(p, EUM)[0]
    assert vals[3] == pytest.approx(0.8 * 0.9)
    d = probabilistic_baseline_decide(p, EUM)
    assert d.act == Act((0, 1))
    assert probabilistic_baseline_decide(np.array([0.9, 0.05, 0.05]), EUM).act == Act((0,))
    with pytest.raises(ValidationError):
        probabilistic_baseline_decide(np.array([0.5, 0.6, 0.0]), EUM)


def test_expected_utilities_csv(tmp_path):
    rows = expected_utility_matrix(np.array([[0.7, 0.1, 0.1, 0.1]]), EUM.extended, 1.0)
    path = tmp_path / "eu.csv"
    write_expected_utilities_csv(path, rows, EUM.catalog, FRAME)
    lines = path.read_text().splitlines()
    assert lines[0] == "sample,a,b,c,a+b,a+c,b+c,a+b+c"
    assert lines[1].startswith("0,0.7")
