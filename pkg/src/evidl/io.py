"""Dataset CSV, model JSON and the synthetic blob generator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .belief import Frame
from .dslayer import PrototypeBank
from .errors import ValidationError
from .evaluation import OUTLIER
from .featurenet import FeatureNet
from .model import EvidentialClassifier
from .utility import build_catalog

OUTLIER_TOKEN = "__OUTLIER__"
FORMAT_VERSION = 1


@dataclass
class Dataset:
    """Feature rows with class indices (-1 marks outliers)."""

    X: np.ndarray
    y: np.ndarray
    frame: Frame

    @property
    def inlier_mask(self) -> np.ndarray:
        return self.y != OUTLIER


def read_dataset(path, frame: Frame | None = None) -> Dataset:
    """Read ``f0..f{P-1},label`` rows.

    Without a ``frame`` the class set is taken from the file in order of first
    appearance; with one, every label must belong to it.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty dataset")
    header = rows[0]
    if not header or header[-1] != "label" or header[:-1] != [f"f{k}" for k in range(len(header) - 1)]:
        raise ValidationError(f"{path}: header must be f0,...,f{{P-1}},label")
    width = len(header)
    feats, raw_labels = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != width:
            raise ValidationError(f"{path}:{lineno}: expected {width} columns, got {len(r)}")
        try:
            values = [float(v) for v in r[:-1]]
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        if not all(np.isfinite(values)):
            raise ValidationError(f"{path}:{lineno}: non-finite feature value")
        feats.append(values)
        raw_labels.append(r[-1])
    if frame is None:
        seen = []
        for lab in raw_labels:
            if lab != OUTLIER_TOKEN and lab not in seen:
                seen.append(lab)
        frame = Frame(tuple(seen))
    y = np.array([OUTLIER if lab == OUTLIER_TOKEN else frame.index(lab) for lab in raw_labels], dtype=int)
    X = np.array(feats, dtype=float).reshape(len(feats), width - 1)
    return Dataset(X, y, frame)


def write_dataset(path, X, y, frame: Frame) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{k}" for k in range(X.shape[1])] + ["label"])
        for row, lab in zip(X, y):
            name = OUTLIER_TOKEN if lab == OUTLIER else frame.labels[lab]
            w.writerow([repr(float(v)) for v in row] + [name])


def read_features(path, dim: int) -> np.ndarray:
    """Feature-only CSV (``f0..`` header); a trailing label column is ignored."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path}: empty feature file")
    try:
        X = np.array([[float(v) for v in r[:dim]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValidationError(f"{path}: expected {dim} feature columns")
    return X


def class_means(classes: int, dims: int, sep: float) -> np.ndarray:
    """Centred class means; neighbouring means are ``sep`` apart."""
    if dims >= classes:
        means = np.zeros((classes, dims))
        means[np.arange(classes), np.arange(classes)] = sep / np.sqrt(2.0)
    elif dims >= 2:
        radius = sep / (2.0 * np.sin(np.pi / classes))
        ang = 2.0 * np.pi * np.arange(classes) / classes
        means = np.zeros((classes, dims))
        means[:, 0] = radius * np.cos(ang)
        means[:, 1] = radius * np.sin(ang)
    else:
        means = (sep * np.arange(classes, dtype=float))[:, None]
    return means - means.mean(axis=0)


def synth_blobs(classes: int, per_class: int, dims: int, sep: float, outliers: int = 0, seed: int = 0,
                sigma: float = 1.0) -> Dataset:
    """Isotropic Gaussian blobs plus outliers on a far shell.

    Class means sit ``sep * sigma`` apart; outliers are drawn uniformly on the
    sphere of radius ``max ||mean|| + 3 * sep * sigma`` around the centre.
    """
    if classes < 2 or per_class < 1 or dims < 1 or sep < 0 or outliers < 0:
        raise ValidationError("invalid synthetic-data parameters")
    rng = np.random.default_rng(seed)
    means = class_means(classes, dims, sep * sigma)
    X = np.vstack([means[c] + sigma * rng.standard_normal((per_class, dims)) for c in range(classes)])
    y = np.repeat(np.arange(classes), per_class)
    if outliers:
        direction = rng.standard_normal((outliers, dims))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = np.linalg.norm(means, axis=1).max() + 3.0 * sep * sigma
        X = np.vstack([X, radius * direction])
        y = np.concatenate([y, np.full(outliers, OUTLIER)])
    frame = Frame(tuple(f"c{c}" for c in range(classes)))
    return Dataset(X, y, frame)


def model_to_dict(model: EvidentialClassifier, config: dict | None = None) -> dict:
    catalog = model.catalog
    selected = [list(a.members) for a in catalog.multi_class_acts()]
    full = len(catalog) == 2 ** model.frame.size - 1
    return {
        "format_version": FORMAT_VERSION,
        "frame": list(model.frame.labels),
        "feature_net": model.net.to_dict(),
        "prototypes": {
            "prototypes": model.bank.prototypes.tolist(),
            "eta": model.bank.eta.tolist(),
            "xi": model.bank.xi.tolist(),
            "membership_logits": model.bank.membership_logits.tolist(),
        },
        "utilities": model.utilities.tolist(),
        "gamma": model.gamma,
        "nu": model.nu,
        "catalog": {"mode": "all" if full else "selected",
                    "selected": [] if full else [[model.frame.labels[i] for i in s] for s in selected]},
        "training_config": config or {},
    }


def model_from_dict(d: dict) -> tuple[EvidentialClassifier, dict]:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format_version {d.get('format_version')!r}")
    try:
        frame = Frame(tuple(d["frame"]))
        net = FeatureNet.from_dict(d["feature_net"])
        p = d["prototypes"]
        bank = PrototypeBank(frame, np.array(p["prototypes"], dtype=float), np.array(p["eta"], dtype=float),
                             np.array(p["xi"], dtype=float), np.array(p["membership_logits"], dtype=float))
        cat = d.get("catalog", {"mode": "all"})
        if cat["mode"] == "all":
            catalog = build_catalog(frame.size, "all")
        else:
            sel = [[frame.index(n) for n in s] for s in cat["selected"]]
            catalog = build_catalog(frame.size, "selected", sel)
        model = EvidentialClassifier(frame, net, bank, np.array(d["utilities"], dtype=float),
                                     float(d["gamma"]), float(d["nu"]), catalog)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model file: {exc!r}") from None
    return model, d.get("training_config", {})


def dumps_model(model: EvidentialClassifier, config: dict | None = None) -> str:
    return json.dumps(model_to_dict(model, config), indent=1) + "\n"


def save_model(path, model: EvidentialClassifier, config: dict | None = None) -> None:
    Path(path).write_text(dumps_model(model, config))


def load_model(path) -> tuple[EvidentialClassifier, dict]:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return model_from_dict(d)
