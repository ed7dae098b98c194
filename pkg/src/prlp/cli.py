"""Command-line entry point: ``prlp <command> [--config FILE] [--seed N] [--jobs N] ...``.

Exit status: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .clustering import KernelSpec, SpectralParams, compare_methods, fit_cluster_model, select_k
from .config import ConfigError, RunConfig, load_config
from .features import FEATURE_COLUMNS, FeatureVariant, dataset_from_tracks, lowess_smooth, select_features
from .lstm import TrainingDiverged, model_from_dict as lstm_from_dict, model_to_dict as lstm_to_dict
from .lstm import sweep_prediction_window, train
from .pipeline import classify_windows, end_to_end_evaluate, window_predictions, write_report
from .rng import derive_seed
from .sim import generate_encounters
from .svm import SvmNotConverged, cross_validate, svm_train_multiclass
from .svm import model_from_dict as svm_from_dict, model_to_dict as svm_to_dict

log = logging.getLogger("prlp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _smoothed(path, cfg: RunConfig):
    return [lowess_smooth(tr, cfg.lowess_span) for tr in io.read_trajectories(path, cfg.frame_rate)]


def _manifest(cfg: RunConfig, command: str, args, outputs: list[Path]) -> None:
    items = {"command": command, "prlp_version": __version__}
    for k in sorted(vars(args)):
        if k not in ("func", "command", "config", "seed", "jobs", "log_level") and getattr(args, k) is not None:
            items[f"arg.{k}"] = getattr(args, k)
    if args.config:
        items["config_file"] = args.config
    items.update(cfg.items())
    out_dir = outputs[0] if outputs[0].suffix == "" else outputs[0].parent
    io.write_manifest(out_dir / f"{command}.manifest", items)


# ---------------------------------------------------------------- commands


def cmd_generate(args, cfg: RunConfig) -> list[Path]:
    test = args.split == "test"
    ds = cfg.dataset(count=cfg.test_count if test else cfg.train_count, seed=derive_seed(cfg.seed, args.split))
    encounters = generate_encounters(ds, args.split)
    out = Path(args.out or cfg.out_dir)
    io.write_trajectories(out / "trajectories.csv", [e.track for e in encounters])
    io.write_trajectories(out / "trajectories_clean.csv", [e.clean for e in encounters])
    io.write_encounters(out / "encounters.csv", encounters)
    return [out]


def cmd_features(args, cfg: RunConfig) -> list[Path]:
    ds = dataset_from_tracks(_smoothed(args.input, cfg), cfg.t_max)
    io.write_features(args.out, ds)
    return [Path(args.out)]


def cmd_train_predictor(args, cfg: RunConfig) -> list[Path]:
    t_pred = args.t_pred or cfg.t_pred
    res = train(_smoothed(args.input, cfg), cfg.train_config(t_pred=t_pred, rng_seed=derive_seed(cfg.seed, "lstm", t_pred)))
    meta = {"t_pred": t_pred, "epochs": cfg.epochs, "final_loss": res.loss_history[-1]}
    io.save_model(args.out, "lstm", lstm_to_dict(res.model), meta)
    return [Path(args.out)]


def cmd_sweep_window(args, cfg: RunConfig) -> list[Path]:
    tracks = _smoothed(args.input, cfg)
    rows = sweep_prediction_window(
        tracks, cfg.windows(), cfg.train_config(rng_seed=derive_seed(cfg.seed, "sweep")), cfg.sweep_folds, cfg.sweep_repeats
    )
    io.write_rows(args.out, ("t_pred", "ade_lstm", "ade_cv"), rows)
    return [Path(args.out)]


def _variant(args, cfg: RunConfig) -> FeatureVariant:
    return FeatureVariant.parse(args.variant or cfg.variant)


def cmd_cluster(args, cfg: RunConfig) -> list[Path]:
    ds, _, _ = io.read_features(args.input)
    states = ds.stacked()
    variant = _variant(args, cfg)
    k = args.k or cfg.k
    model, assignment = fit_cluster_model(
        states, variant, k, KernelSpec.parse(cfg.cluster_kernel), cfg.cluster_restarts,
        derive_seed(cfg.seed, f"cluster:{variant.value}"),
    )
    risks = model.risk(assignment)
    out = Path(args.out or cfg.out_dir)
    io.write_features(out / "labeled_features.csv", ds, assignment, risks)
    io.write_assignments(out / "assignments.csv", ds.row_index(), assignment, risks)
    io.write_rows(
        out / "cluster_profiles.csv", ("cluster", "risk", "size", *FEATURE_COLUMNS),
        ([c, model.labels[c].value, int(np.sum(assignment == c)), *model.profiles[c]] for c in range(k)),
    )
    return [out]


def cmd_select_k(args, cfg: RunConfig) -> list[Path]:
    ds, _, _ = io.read_features(args.input)
    X = select_features(ds.stacked(), _variant(args, cfg))
    k_min = args.k_min or cfg.k_min
    k_max = args.k_max or cfg.k_max
    if not 2 <= k_min <= k_max:
        raise UsageError("need 2 <= k-min <= k-max")
    sel = select_k(
        X, range(k_min, k_max + 1), args.method or cfg.cluster_method, cfg.cluster_restarts,
        derive_seed(cfg.seed, "select-k"), KernelSpec.parse(cfg.cluster_kernel),
        spectral=SpectralParams(k_nn=cfg.knn), jobs=cfg.jobs,
    )
    io.write_rows(args.out, io.CRITERIA_HEADER, ((r.K, r.aic, r.bic, r.silhouette) for r in sel.table))
    print(f"best_k={sel.best_k}" + (f" eigengap_k={sel.eigengap_k}" if sel.eigengap_k is not None else ""))
    return [Path(args.out)]


def cmd_compare_methods(args, cfg: RunConfig) -> list[Path]:
    ds, _, _ = io.read_features(args.input)
    X = select_features(ds.stacked(), _variant(args, cfg))
    k = args.k or cfg.k
    cmp = compare_methods(
        X, k, cfg.cluster_restarts, derive_seed(cfg.seed, "compare"), KernelSpec.parse(cfg.cluster_kernel),
        SpectralParams(k_nn=cfg.knn),
    )
    header = ("method", "mean_silhouette", "selected", *(f"cluster{c}" for c in range(k)))
    rows = [(m, s, m == cmp.method, *cmp.per_cluster[m]) for m, s in cmp.silhouettes.items()]
    io.write_rows(args.out, header, rows)
    print(f"selected={cmp.method}")
    return [Path(args.out)]


def cmd_train_classifier(args, cfg: RunConfig) -> list[Path]:
    ds, _, risks = io.read_features(args.input)
    if risks is None:
        raise io.DataError(f"{args.input}: feature file has no risk column (run 'cluster' first)")
    states = ds.stacked()
    variant = _variant(args, cfg)
    kernel = KernelSpec.parse(args.kernel or cfg.svm_kernel)
    model = svm_train_multiclass(states, risks, kernel, cfg.svm_c, variant, cfg.svm_tol)
    io.save_model(args.out, "svm", svm_to_dict(model), {"train_states": len(states)})
    outputs = [Path(args.out)]
    if args.report:
        folds = cross_validate(states, risks, kernel, cfg.svm_c, variant, cfg.cv_folds, derive_seed(cfg.seed, "svm-cv"))
        io.write_rows(args.report, io.EVAL_HEADER, ((f.kernel, f.variant, f.fold, f.accuracy, f.preds_per_sec) for f in folds))
        print(f"cv_accuracy={np.mean([f.accuracy for f in folds]):.4f}")
    return outputs


def cmd_predict(args, cfg: RunConfig) -> list[Path]:
    lstm = lstm_from_dict(io.load_model(args.lstm, "lstm"))
    clf = svm_from_dict(io.load_model(args.svm, "svm"))
    tracks = _smoothed(args.input, cfg)
    t_pred = args.t_pred or cfg.t_pred
    keys, pred, _ = window_predictions(lstm, tracks, t_pred, cfg.t_max)
    if not keys:
        raise io.DataError(f"{args.input}: no track has the {4 + t_pred} frames needed for one window")
    seqs = classify_windows(clf, keys, pred)
    rows = [(s.track_id, s.t, k + 1, *pred[i, k], lab.value) for i, s in enumerate(seqs) for k, lab in enumerate(s.labels)]
    io.write_rows(args.out, ("traj_id", "t", "step", *FEATURE_COLUMNS, "predicted_risk"), rows)
    return [Path(args.out)]


def cmd_evaluate(args, cfg: RunConfig) -> list[Path]:
    report = end_to_end_evaluate(cfg)
    out = Path(args.out or cfg.out_dir)
    write_report(report, out)
    io.save_model(out / "lstm.json", "lstm", lstm_to_dict(report.lstm), {"t_pred": cfg.t_pred})
    for v, m in report.models.items():
        io.save_model(out / f"svm_{v.value}.json", "svm", svm_to_dict(m.clf))
    print(f"overall_accuracy={report.summary['overall_accuracy']:.4f}")
    return [out]


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
    common.add_argument("--jobs", type=int, help="maximum parallel workers")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="prlp", description="Pedestrian risk-level prediction pipeline.")
    p.add_argument("--version", action="version", version=f"prlp {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        sp.set_defaults(func=func)
        return sp

    sp = add("generate", cmd_generate, "simulate encounters and write ego-frame trajectory CSVs")
    sp.add_argument("--split", choices=["train", "test"], default="train")
    sp.add_argument("--out", help="output directory")

    sp = add("features", cmd_features, "smooth trajectories and write per-frame feature states")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train-predictor", cmd_train_predictor, "train the LSTM trajectory predictor")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--t-pred", type=int)

    sp = add("sweep-window", cmd_sweep_window, "cross-validated ADE for each prediction window")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)

    sp = add("cluster", cmd_cluster, "fit the KPCA + k-means labeller and name the clusters")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--variant")
    sp.add_argument("--k", type=int)

    sp = add("select-k", cmd_select_k, "AIC/BIC/silhouette table over a range of K")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k-min", type=int)
    sp.add_argument("--k-max", type=int)
    sp.add_argument("--method", choices=["kpca-kmc", "spectral"])
    sp.add_argument("--variant")

    sp = add("compare-methods", cmd_compare_methods, "silhouettes of KPCA-KMC and spectral clustering")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--k", type=int)
    sp.add_argument("--variant")

    sp = add("train-classifier", cmd_train_classifier, "train the one-vs-one SVM on labelled features")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--variant")
    sp.add_argument("--kernel")
    sp.add_argument("--report", help="write a k-fold CV evaluation CSV here")

    sp = add("predict", cmd_predict, "risk sequences for every window of the given trajectories")
    sp.add_argument("--lstm", required=True)
    sp.add_argument("--svm", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--t-pred", type=int)

    sp = add("evaluate", cmd_evaluate, "train every stage and score risk sequences on held-out data")
    sp.add_argument("--out", help="report directory")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, jobs=args.jobs)
        outputs = args.func(args, cfg)
        _manifest(cfg, args.command, args, outputs)
    except (ConfigError, UsageError) as e:
        print(f"prlp {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, SvmNotConverged, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"prlp {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.DataError, ValueError) as e:
        print(f"prlp {args.command}: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
