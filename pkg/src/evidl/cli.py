"""``evidl`` command line.

Exit status: 0 success, 1 usage error, 2 unreadable or invalid input,
3 numeric failure (divergence, total conflict, failed gradient check).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io as eio
from . import plotting
from .actselect import LINKAGES, confusion_matrix, hac, normalize_columns, read_acts_json, select_acts, write_acts_json
from .errors import NumericError, ValidationError
from .evaluation import OUTLIER, evaluate
from .featurenet import FeatureNet
from .training import DEFAULT_NU_GRID, TrainingConfig, gradient_check, initialize_model, train, tune_nu, write_metrics_csv
from .utility import build_catalog, meowa_weights, read_original_utilities

EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 1, 2, 3

# keys a train config may carry besides the TrainingConfig fields
NET_KEYS = ("architecture", "input_shape", "utilities", "acts")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _thread_limit():
    raw = os.environ.get("EVD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"EVD_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"EVD_THREADS must be a positive integer, got {raw!r}")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(limits=n)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _gamma(text: str) -> float:
    g = float(text)
    if not 0.5 <= g <= 1.0:
        raise argparse.ArgumentTypeError("gamma must lie in [0.5, 1]")
    return g


def _unit(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("value must lie in [0, 1]")
    return v


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _catalog(model, spec: str):
    if spec == "all":
        return build_catalog(model.frame.size, "all")
    if spec == "selected":
        return model.catalog
    return build_catalog(model.frame.size, "selected", read_acts_json(spec, model.frame))


def _inliers(ds):
    mask = ds.y != OUTLIER
    return ds.X[mask], ds.y[mask]


def _load_pair(model_path, data_path):
    model, echo = eio.load_model(model_path)
    ds = eio.read_dataset(data_path, model.frame)
    return model, ds, echo


def _resolve_nu(args, model, gamma, catalog) -> float:
    if args.nu != "tune":
        return _unit(args.nu)
    source = eio.read_dataset(args.tune_data, model.frame) if args.tune_data else eio.read_dataset(args.data, model.frame)
    X, y = _inliers(source)
    return tune_nu(model, X, y, gamma, DEFAULT_NU_GRID, catalog)


def cmd_train(args) -> int:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    extras = {k: raw.pop(k) for k in NET_KEYS if k in raw}
    config = TrainingConfig.from_dict(raw)
    ds = eio.read_dataset(args.data)
    X, y = _inliers(ds)
    if len(y) == 0:
        raise ValidationError("training data has no labelled rows")
    input_shape = tuple(extras.get("input_shape", (X.shape[1],)))
    net = FeatureNet.build(input_shape, extras.get("architecture", []), config.seed)
    U = read_original_utilities(extras["utilities"], ds.frame) if "utilities" in extras else None
    catalog = None
    if "acts" in extras:
        catalog = build_catalog(ds.frame.size, "selected", read_acts_json(extras["acts"], ds.frame))
    model = initialize_model(X, y, ds.frame, config, net=net, utilities=U, catalog=catalog)
    model, history = train(X, y, model, config)
    echo = config.to_dict() | extras
    eio.save_model(args.out, model, echo)
    if args.log:
        write_metrics_csv(args.log, history)
    if args.plot_dir:
        plotting.plot_training(history, Path(args.plot_dir) / "training.png")
    last = history[-1] if history else None
    if last is not None:
        print(f"epochs {last.epoch}  train loss {last.train_loss:.4f}  train accuracy {last.train_acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    model, ds, _ = _load_pair(args.model, args.data)
    catalog = _catalog(model, args.acts)
    nu = _resolve_nu(args, model, args.gamma, catalog)
    report = evaluate(model, ds.X, ds.y, args.gamma, nu, catalog)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        report.write_csv(args.csv)
    return 0


def cmd_decide(args) -> int:
    model, _ = eio.load_model(args.model)
    X = eio.read_features(args.features, model.net.input_dim)
    catalog = _catalog(model, args.acts)
    gamma = model.gamma if args.gamma is None else args.gamma
    nu = model.nu if args.nu is None else args.nu
    m = model.masses(X)
    E = model.expected(None, gamma, nu, catalog, masses=m)
    dec = model.decide(None, gamma, nu, catalog, masses=m)
    names = catalog.names(model.frame)
    header = ["row", "decision", "expected_utility"] + [f"m_{c}" for c in model.frame.labels] + ["m_omega"]
    rows = [[i, names[d], E[i, d], *m[i]] for i, d in enumerate(dec)]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_select_acts(args) -> int:
    model, ds, echo = _load_pair(args.model, args.data)
    X, y = _inliers(ds)
    cm = confusion_matrix(model.predict_precise(X), y, model.frame)
    features = normalize_columns(cm)
    tree = hac(features, args.linkage)
    acts, cut = select_acts(tree, features)
    write_acts_json(args.out, acts, model.frame)
    if args.dendrogram:
        tree.write_csv(args.dendrogram, model.frame)
    if args.plot_dir:
        plotting.plot_act_selection(tree, cut, model.frame.labels, Path(args.plot_dir) / "act_selection.png")
    if args.update_model:
        model.catalog = build_catalog(model.frame.size, "selected", [a.members for a in acts])
        eio.save_model(args.update_model, model, echo)
    names = ", ".join("{" + a.name(model.frame).replace("+", ",") + "}" for a in acts) or "(none)"
    print(f"cut at height {cut.threshold:.4f} into {cut.n_clusters} clusters; acts: {names}")
    return 0


def cmd_owa(args) -> int:
    w = meowa_weights(args.cardinality, args.gamma).weights
    print(" ".join(f"{v:.{args.digits}f}" for v in w))
    return 0


def cmd_synth(args) -> int:
    ds = eio.synth_blobs(args.classes, args.per_class, args.dims, args.sep, args.outliers, args.seed)
    eio.write_dataset(args.out, ds.X, ds.y, ds.frame)
    return 0


def cmd_gradcheck(args) -> int:
    model, ds, _ = _load_pair(args.model, args.data)
    X, y = _inliers(ds)
    if args.samples and args.samples < len(y):
        pick = np.sort(np.random.default_rng(args.seed).choice(len(y), args.samples, replace=False))
        X, y = X[pick], y[pick]
    report = gradient_check(model, X, y, step=args.step, tolerance=args.tolerance)
    print(report.summary())
    return 0 if report.passed else EXIT_NUMERIC


SWEEP_FIELDS = ("gamma", "nu", "AU", "AC", "omega_rate_in", "omega_rate_out", "precise_accuracy")


def cmd_sweep(args) -> int:
    model, ds, _ = _load_pair(args.model, args.data)
    catalog = _catalog(model, args.acts)
    tune_ds = eio.read_dataset(args.tune_data, model.frame) if args.tune_data else ds
    Xt, yt = _inliers(tune_ds)
    grid, best = [], []
    for gamma in args.gammas:
        reports = {nu: evaluate(model, ds.X, ds.y, gamma, nu, catalog) for nu in args.nus}
        for r in reports.values():
            grid.append(r)
        chosen = tune_nu(model, Xt, yt, gamma, args.nus, catalog)
        best.append(reports[chosen])

    def row(r):
        return [r.gamma, r.nu, r.averaged_utility, r.averaged_cardinality,
                r.omega_rate_inliers, r.omega_rate_outliers, r.precise_accuracy]

    out = Path(args.out)
    _write_rows(out, SWEEP_FIELDS, [row(r) for r in grid])
    best_path = Path(args.best_out) if args.best_out else out.with_name(out.stem + "_best.csv")
    _write_rows(best_path, SWEEP_FIELDS, [row(r) for r in best])
    if args.plot_dir:
        plot_dir = Path(args.plot_dir)
        plotting.plot_nu_curves([r.to_dict() for r in grid], plot_dir / "au_vs_nu.png")
        plotting.plot_gamma_sweep([r.to_dict() for r in best], plot_dir / "gamma_sweep.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="evidl", description="Evidential classifier with set-valued decisions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="fit a model on a labelled CSV")
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="JSON with training options and optional architecture")
    t.add_argument("--out", required=True, help="model JSON to write")
    t.add_argument("--log", help="per-epoch metrics CSV")
    t.add_argument("--plot-dir")
    t.set_defaults(func=cmd_train)

    def decision_flags(q, gamma_required):
        if gamma_required:
            q.add_argument("--gamma", type=_gamma, required=True)
        q.add_argument("--acts", default="all", help="all, selected (the model's catalog) or an acts JSON file")

    e = sub.add_parser("eval", help="score a model on labelled data with outliers")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    decision_flags(e, True)
    e.add_argument("--nu", required=True, help="value in [0, 1] or 'tune'")
    e.add_argument("--tune-data", help="labelled CSV used when --nu tune (defaults to --data)")
    e.add_argument("--out", help="report JSON (stdout when omitted)")
    e.add_argument("--csv", help="report as a one-row CSV")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("decide", help="choose an act for each feature row")
    d.add_argument("--model", required=True)
    d.add_argument("--features", required=True)
    d.add_argument("--gamma", type=_gamma)
    d.add_argument("--nu", type=_unit)
    d.add_argument("--acts", default="selected")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decide)

    s = sub.add_parser("select-acts", help="pick multi-class acts from the confusion matrix")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--linkage", choices=LINKAGES, default="ward")
    s.add_argument("--out", required=True, help="acts JSON to write")
    s.add_argument("--dendrogram", help="merge table CSV")
    s.add_argument("--plot-dir")
    s.add_argument("--update-model", help="write a copy of the model carrying the selected catalog")
    s.set_defaults(func=cmd_select_acts)

    o = sub.add_parser("owa", help="print max-entropy OWA weights")
    o.add_argument("--cardinality", type=int, required=True)
    o.add_argument("--gamma", type=_gamma, required=True)
    o.add_argument("--digits", type=int, default=4)
    o.set_defaults(func=cmd_owa)

    y = sub.add_parser("synth", help="write Gaussian blobs with shell outliers")
    y.add_argument("--classes", type=int, required=True)
    y.add_argument("--per-class", type=int, required=True)
    y.add_argument("--dims", type=int, default=2)
    y.add_argument("--sep", type=float, default=4.0)
    y.add_argument("--outliers", type=int, default=0)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)

    g = sub.add_parser("gradcheck", help="compare analytic and numerical gradients")
    g.add_argument("--model", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--samples", type=int, default=8)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--step", type=float, default=1e-6)
    g.add_argument("--tolerance", type=float, default=1e-4)
    g.set_defaults(func=cmd_gradcheck)

    w = sub.add_parser("sweep", help="grid over gamma and nu with CSV and figures")
    w.add_argument("--model", required=True)
    w.add_argument("--data", required=True)
    w.add_argument("--gammas", type=_float_list, default=[0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    w.add_argument("--nus", type=_float_list, default=list(DEFAULT_NU_GRID))
    w.add_argument("--acts", default="all")
    w.add_argument("--tune-data", help="labelled CSV for picking nu per gamma (defaults to --data)")
    w.add_argument("--out", required=True, help="grid CSV")
    w.add_argument("--best-out", help="CSV of the tuned-nu row per gamma")
    w.add_argument("--plot-dir")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "gammas", None) is not None:
        if any(not 0.5 <= g <= 1.0 for g in args.gammas) or any(not 0 <= v <= 1 for v in args.nus):
            parser.error("gammas must lie in [0.5, 1] and nus in [0, 1]")
    try:
        with _thread_limit():
            return args.func(args)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return 0
    except (ValidationError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"evidl {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except argparse.ArgumentTypeError as exc:
        print(f"evidl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"evidl {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
