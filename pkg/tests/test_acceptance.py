"""Acceptance gate: ten criteria, each reporting one PASS/FAIL line.

Run under pytest (lines are collected into a terminal summary section) or
directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import time

import numpy as np
import pytest

from evidl import cli
from evidl.actselect import hac, normalize_columns, select_acts
from evidl.belief import Frame, GeneralMassFunction, MassVector, combine_dempster, vacuous
from evidl.decision import expected_utility_matrix
from evidl.dslayer import PrototypeBank, combine_product, combine_prototypes
from evidl.evaluation import average_utility, evaluate
from evidl.featurenet import Conv2D, FeatureNet
from evidl.io import synth_blobs
from evidl.model import EvidentialClassifier
from evidl.training import TrainingConfig, gradient_check, initialize_model, train, tune_nu
from evidl.utility import Act, build_catalog, extend_utility_matrix, meowa_weights

RESULTS: dict[int, str] = {}

# Desk benchmark protocol shared by criteria 7 and 8.
BENCH_CONFIG = TrainingConfig(learning_rate=0.02, epochs=100, batch_size=32, prototypes_per_class=2,
                              seed=7, nu=1.0, gamma=0.8)
TRAIN_SEED, TEST_SEED = 7, 8

EXAMPLE2_COUNTS = np.array([
    [557, 115, 24, 13],
    [107, 679, 32, 14],
    [13, 16, 663, 128],
    [25, 32, 145, 627],
])


def criterion(n: int, title: str):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
                RESULTS[n] = f"FAIL [{n:2d}] {title}: {msg}"
                print(RESULTS[n])
                raise
            took = time.perf_counter() - start
            RESULTS[n] = f"PASS [{n:2d}] {title}: {detail or 'ok'} ({took:.2f}s)"
            print(RESULTS[n])
        return run
    return wrap


@functools.lru_cache(maxsize=None)
def bench_model():
    train_ds = synth_blobs(3, 100, 2, 4.0, seed=TRAIN_SEED)
    start = time.perf_counter()
    init = initialize_model(train_ds.X, train_ds.y, train_ds.frame, BENCH_CONFIG)
    model, _ = train(train_ds.X, train_ds.y, init, BENCH_CONFIG)
    return model, train_ds, time.perf_counter() - start


@criterion(1, "max-entropy OWA weights and extended utility matrix")
def test_c01_owa_oracle():
    start = time.perf_counter()
    w = meowa_weights(3, 0.8).weights
    assert abs(w[0] - 0.6819) <= 1e-3, w
    eum = extend_utility_matrix(np.eye(3), build_catalog(3, "all"), 0.8)
    expected = np.array([
        [1, 0, 0], [0, 1, 0], [0, 0, 1],
        [0.8, 0.8, 0], [0.8, 0, 0.8], [0, 0.8, 0.8],
        [0.6819, 0.6819, 0.6819],
    ])
    assert np.array_equal(eum.extended[:3], np.eye(3))
    assert np.max(np.abs(eum.extended - expected)) <= 1e-3
    took = time.perf_counter() - start
    assert took < 1.0
    return f"w1={w[0]:.4f}, max table deviation {np.max(np.abs(eum.extended - expected)):.1e}"


@criterion(2, "expected utilities of the four worked mass vectors")
def test_c02_expected_utility_oracle():
    masses = np.array([
        [0.70, 0.10, 0.10, 0.10],
        [0.97, 0.01, 0.01, 0.01],
        [0.50, 0.50, 0.00, 0.00],
        [0.40, 0.40, 0.00, 0.20],
    ])
    expected = np.array([
        [0.70, 0.10, 0.10],
        [0.97, 0.01, 0.01],
        [0.50, 0.50, 0.00],
        [0.40, 0.40, 0.00],
    ])
    E = expected_utility_matrix(masses, np.eye(3), nu=1.0)
    err = np.max(np.abs(E - expected))
    assert err <= 1e-9, E
    return f"max deviation {err:.1e}"


@criterion(3, "act selection on the four-class confusion matrix")
def test_c03_act_selection_oracle():
    features = normalize_columns(EXAMPLE2_COUNTS)
    tree = hac(features, "ward")
    acts, cut = select_acts(tree, features)
    assert acts == [Act((0, 1)), Act((2, 3))], acts
    height = next(m.height for m in tree.merges if m.members == (0, 1))
    assert abs(height - 0.927) <= 0.002, height
    return f"acts {{w1,w2}} {{w3,w4}}, merge height {height:.4f}"


def _gradient_config(seed: int):
    """conv 2x2 (tanh) -> pool -> DS layer with 4 prototypes, random everything."""
    rng = np.random.default_rng(seed)
    frame = Frame(("w1", "w2", "w3"))
    spec = [
        {"type": "conv", "size": [2, 2], "channels": 2, "activation": "tanh"},
        {"type": "pool", "window": 2, "beta": rng.dirichlet(np.ones(4)).tolist()},
        {"type": "flatten"},
    ]
    net = FeatureNet.build((5, 5, 1), spec, seed)
    conv = net.layers[0]
    assert isinstance(conv, Conv2D)
    conv.bias[...] = rng.normal(0.0, 0.3, conv.bias.shape)
    X = rng.normal(size=(3, 25))
    feats = net.forward(X)[0]
    protos = feats[rng.integers(0, len(X), 4)] + rng.normal(0.0, 0.5, (4, net.output_dim))
    bank = PrototypeBank(frame, protos, rng.uniform(0.3, 1.0, 4), rng.normal(size=4), rng.normal(size=(4, 3)))
    model = EvidentialClassifier(frame, net, bank, np.eye(3), gamma=0.8, nu=float(rng.uniform()))
    return model, X, rng.integers(0, 3, len(X))


@criterion(4, "analytic gradients of the full pipeline vs central differences")
def test_c04_gradient_suite():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        model, X, y = _gradient_config(seed)
        report = gradient_check(model, X, y, step=1e-6, tolerance=1e-4)
        worst = max(worst, report.max_relative_error)
        assert report.passed, f"seed {seed}: {report.summary()}"
    took = time.perf_counter() - start
    assert took < 30.0, took
    return f"worst relative error {worst:.2e} over 100 configurations"


def _random_mass(rng, frame, max_focal=4):
    M = frame.size
    k = int(rng.integers(1, max_focal + 1))
    focal = {}
    for _ in range(k):
        size = int(rng.integers(1, M + 1))
        subset = frozenset(rng.choice(M, size=size, replace=False).tolist())
        focal[subset] = focal.get(subset, 0.0) + float(rng.uniform(0.05, 1.0))
    # keep some mass on the frame so no pair is totally conflicting
    focal[frame.omega] = focal.get(frame.omega, 0.0) + float(rng.uniform(0.05, 0.5))
    total = sum(focal.values())
    return GeneralMassFunction(frame, {a: v / total for a, v in focal.items()})


def _max_gap(m1, m2):
    keys = set(m1.focal) | set(m2.focal)
    return max(abs(m1[a] - m2[a]) for a in keys)


@criterion(5, "Dempster algebra and recursion vs closed product form")
def test_c05_dempster_algebra():
    rng = np.random.default_rng(5)
    frame = Frame(("a", "b", "c", "d"))
    worst = 0.0
    for _ in range(1000):
        m1, m2, m3 = (_random_mass(rng, frame) for _ in range(3))
        worst = max(worst, _max_gap(combine_dempster(m1, m2), combine_dempster(m2, m1)))
        left = combine_dempster(combine_dempster(m1, m2), m3)
        right = combine_dempster(m1, combine_dempster(m2, m3))
        worst = max(worst, _max_gap(left, right))
        worst = max(worst, _max_gap(combine_dempster(m1, vacuous(frame)), m1))
    assert worst < 1e-12, worst

    rec_worst = 0.0
    for trial in range(200):
        M = int(rng.integers(2, 6))
        fr = Frame(tuple(f"c{j}" for j in range(M)))
        n = int(rng.integers(1, 21))
        masses = []
        for _ in range(n):
            s = float(rng.uniform(0.0, 0.99))
            masses.append(MassVector(fr, s * rng.dirichlet(np.ones(M)), 1.0 - s))
        a = combine_prototypes(masses).as_array()
        b = combine_product(masses).as_array()
        rec_worst = max(rec_worst, float(np.max(np.abs(a - b))))
    assert rec_worst < 1e-12, rec_worst
    return f"algebra error {worst:.1e}, recursion vs product {rec_worst:.1e}"


@criterion(6, "gamma=1 makes the whole frame dominant whenever m(Omega)>0")
def test_c06_gamma_one_dominance():
    rng = np.random.default_rng(6)
    M = 4
    catalog = build_catalog(M, "all")
    eum = extend_utility_matrix(np.eye(M), catalog, 1.0)
    raw = rng.dirichlet(np.ones(M + 1), size=1000)
    raw[:, M] = np.maximum(raw[:, M], 1e-6)
    masses = raw / raw.sum(axis=1, keepdims=True)
    assert np.all(masses[:, M] > 0)
    E = expected_utility_matrix(masses, eum.extended, nu=0.5)
    from evidl.decision import argmax_act_index

    decisions = argmax_act_index(E)
    labels = rng.integers(0, M, 1000)
    assert np.all(decisions == catalog.omega_index)
    au = average_utility(decisions, labels, eum)
    assert au == 1.0
    return "Omega chosen for all 1000, AU = 1"


@criterion(7, "desk benchmark: precise accuracy on separated blobs")
def test_c07_desk_benchmark():
    model, _, took = bench_model()
    test_ds = synth_blobs(3, 100, 2, 4.0, outliers=300, seed=TEST_SEED)
    report = evaluate(model, test_ds.X, test_ds.y, gamma=0.8, nu=1.0)
    assert report.n_inliers == 300
    assert report.precise_accuracy >= 0.95, report.precise_accuracy
    assert BENCH_CONFIG.epochs <= 100
    assert took < 60.0, took
    return f"accuracy {report.precise_accuracy:.4f} after {BENCH_CONFIG.epochs} epochs, training {took:.1f}s"


@criterion(8, "outliers take Omega more often than inliers at gamma=0.8, tuned nu")
def test_c08_novelty_separation():
    model, train_ds, _ = bench_model()
    nu = tune_nu(model, train_ds.X, train_ds.y, 0.8)
    test_ds = synth_blobs(3, 100, 2, 4.0, outliers=300, seed=TEST_SEED)
    report = evaluate(model, test_ds.X, test_ds.y, gamma=0.8, nu=nu)
    gap = report.omega_rate_outliers - report.omega_rate_inliers
    assert gap >= 0.3, (
        f"tuned nu={nu}: omega rate outliers {report.omega_rate_outliers:.3f}, "
        f"inliers {report.omega_rate_inliers:.3f}"
    )
    return f"nu={nu}, outliers {report.omega_rate_outliers:.3f} vs inliers {report.omega_rate_inliers:.3f}"


@criterion(9, "averaged cardinality grows from gamma=0.5 to gamma=0.9")
def test_c09_set_valued_behaviour():
    train_ds = synth_blobs(3, 100, 2, 1.0, seed=TRAIN_SEED)
    test_ds = synth_blobs(3, 100, 2, 1.0, seed=TEST_SEED)
    init = initialize_model(train_ds.X, train_ds.y, train_ds.frame, BENCH_CONFIG)
    model, _ = train(train_ds.X, train_ds.y, init, BENCH_CONFIG)
    ac = {}
    for gamma in (0.5, 0.9):
        nu = tune_nu(model, train_ds.X, train_ds.y, gamma)
        ac[gamma] = evaluate(model, test_ds.X, test_ds.y, gamma, nu).averaged_cardinality
    assert ac[0.5] == 1.0, ac
    assert ac[0.9] > ac[0.5], ac
    return f"AC(0.5)={ac[0.5]:.3f}, AC(0.9)={ac[0.9]:.3f}"


def _cli_run(workdir):
    train_csv, test_csv = workdir / "train.csv", workdir / "test.csv"
    cfg = workdir / "config.json"
    cfg.write_text('{"learning_rate": 0.02, "epochs": 20, "batch_size": 32, "seed": 11}\n')
    assert cli.main(["synth", "--classes", "3", "--per-class", "40", "--seed", "11", "--out", str(train_csv)]) == 0
    assert cli.main(["synth", "--classes", "3", "--per-class", "40", "--outliers", "30", "--seed", "12",
                     "--out", str(test_csv)]) == 0
    assert cli.main(["train", "--data", str(train_csv), "--config", str(cfg), "--out", str(workdir / "model.json")]) == 0
    assert cli.main(["eval", "--data", str(test_csv), "--model", str(workdir / "model.json"), "--gamma", "0.8",
                     "--nu", "tune", "--tune-data", str(train_csv), "--acts", "all",
                     "--out", str(workdir / "report.json"), "--csv", str(workdir / "report.csv")]) == 0
    return {name: (workdir / name).read_bytes() for name in ("model.json", "report.json", "report.csv")}


@criterion(10, "two identical train+eval runs give byte-identical artifacts")
def test_c10_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    first, second = _cli_run(a), _cli_run(b)
    for name in first:
        assert first[name] == second[name], f"{name} differs between runs"
    return f"{len(first)} artifacts identical"


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted(globals().items()):
        if not name.startswith("test_c"):
            continue
        try:
            if name == "test_c10_determinism":
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except BaseException:
            failed += 1
    sys.exit(1 if failed else 0)
