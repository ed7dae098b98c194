"""Observe, predict, featurize, classify: risk sequences and their evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import RISK_ORDER, KernelSpec, RiskLabel, fit_cluster_model
from .config import RunConfig
from .features import FeatureVariant, PedestrianTrack, build_feature_states, ttc_array
from .io import write_rows
from .lstm import MIN_OBSERVED, LstmModel, predict_batch, train, window_ades
from .sim import Behavior, GeneratedData, generate_dataset
from .rng import derive_seed
from .svm import SvmModel, cross_validate, svm_train_multiclass

log = logging.getLogger(__name__)

LATERAL_BEHAVIORS = (Behavior.CROSS, Behavior.CROSS_WITH_HESITATION, Behavior.APPROACH_FROM_RIGHT)


@dataclass
class RiskSequence:
    """Labels for frames t .. t+T_pred-1, predicted after observing frames 0 .. t-1."""

    track_id: str
    t: int
    labels: list[RiskLabel]

    def __len__(self) -> int:
        return len(self.labels)


def spliced_states(prefix: np.ndarray, future: np.ndarray, frame_rate: float, t_max: float) -> np.ndarray:
    """Feature states of the ``future`` points appended to ``prefix``.

    Works on a single window (L, 2)/(T, 2) or a batch (B, L, 2)/(B, T, 2).
    The first future velocity is taken against the last observed point.
    """
    prefix = np.asarray(prefix, dtype=float)
    future = np.asarray(future, dtype=float)
    prev = np.concatenate([prefix[..., -1:, :], future[..., :-1, :]], axis=-2)
    vel = (future - prev) * frame_rate
    ttc = ttc_array(future.reshape(-1, 2), vel.reshape(-1, 2), t_max).reshape(future.shape[:-1])
    return np.concatenate([future, vel, ttc[..., None]], axis=-1)


def _check_prefix(n_observed: int) -> None:
    if n_observed < MIN_OBSERVED:
        raise ValueError(f"observed prefix has {n_observed} frames, need at least {MIN_OBSERVED}")


def predict_risk_sequence(
    lstm: LstmModel, clf: SvmModel, observed: PedestrianTrack, t_pred: int, t_max: float = 10.0
) -> RiskSequence:
    _check_prefix(len(observed))
    pred = predict_batch(lstm, observed.points[None], t_pred)[0]
    states = spliced_states(observed.points, pred, observed.frame_rate, t_max)
    return RiskSequence(observed.id, len(observed), clf.predict(states))


def actual_risk_sequence(clf: SvmModel, track: PedestrianTrack, t: int, t_pred: int, t_max: float = 10.0) -> RiskSequence:
    _check_prefix(t)
    if t + t_pred > len(track):
        raise ValueError(f"window {t}..{t + t_pred - 1} exceeds track {track.id} of {len(track)} frames")
    states = build_feature_states(track, t_max)[t : t + t_pred]
    return RiskSequence(track.id, t, clf.predict(states))


@dataclass
class ConfusionMatrix:
    """counts[i, j]: states output as class i whose target was class j."""

    classes: list[RiskLabel]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def precision(self) -> np.ndarray:
        rows = self.counts.sum(axis=1)
        return np.divide(np.diag(self.counts), rows, out=np.full(len(rows), np.nan), where=rows > 0)

    def recall(self) -> np.ndarray:
        cols = self.counts.sum(axis=0)
        return np.divide(np.diag(self.counts), cols, out=np.full(len(cols), np.nan), where=cols > 0)

    def error_rate(self, label: RiskLabel) -> float:
        """Share of target ``label`` states given another label."""
        return float(1.0 - self.recall()[self.classes.index(RiskLabel(label))])


def confusion(predicted: Sequence[RiskSequence], actual: Sequence[RiskSequence]) -> ConfusionMatrix:
    if len(predicted) != len(actual):
        raise ValueError(f"{len(predicted)} predicted sequences vs {len(actual)} actual")
    counts = np.zeros((4, 4), dtype=np.int64)
    for p, a in zip(predicted, actual):
        if (p.track_id, p.t, len(p)) != (a.track_id, a.t, len(a)):
            raise ValueError(f"misaligned windows: {p.track_id}@{p.t} vs {a.track_id}@{a.t}")
        for lp, la in zip(p.labels, a.labels):
            counts[RiskLabel(lp).index, RiskLabel(la).index] += 1
    return ConfusionMatrix(list(RISK_ORDER), counts)


def window_predictions(lstm: LstmModel, tracks: Sequence[PedestrianTrack], t_pred: int, t_max: float):
    """Predicted and true future feature states for every window, in (track, t) order.

    Returns (keys, predicted states (W, T, 5), true states (W, T, 5)).
    """
    batches: dict[int, list] = {}
    keys = []
    for ti, tr in enumerate(tracks):
        for t in range(MIN_OBSERVED, len(tr) - t_pred + 1):
            batches.setdefault(t, []).append((ti, len(keys)))
            keys.append((tr.id, t))
    W = len(keys)
    pred = np.zeros((W, t_pred, 5))
    true = np.zeros((W, t_pred, 5))
    full = [build_feature_states(tr, t_max) for tr in tracks]
    for t, members in batches.items():
        idx = np.array([w for _, w in members])
        prefixes = np.stack([tracks[ti].points[:t] for ti, _ in members])
        future = predict_batch(lstm, prefixes, t_pred)
        pred[idx] = spliced_states(prefixes, future, tracks[0].frame_rate, t_max)
        true[idx] = np.stack([full[ti][t : t + t_pred] for ti, _ in members])
    return keys, pred, true


def classify_windows(clf: SvmModel, keys, states: np.ndarray) -> list[RiskSequence]:
    W, T = states.shape[:2]
    if W == 0:
        return []
    labels = clf.predict(states.reshape(-1, 5))
    return [RiskSequence(tid, t, labels[i * T : (i + 1) * T]) for i, (tid, t) in enumerate(keys)]


# ---------------------------------------------------------------- end-to-end


@dataclass
class VariantModels:
    variant: FeatureVariant
    cluster_labels: list[RiskLabel]
    clf: SvmModel
    cv_accuracy: float


@dataclass
class Report:
    confusion: ConfusionMatrix
    ttc_confusion: ConfusionMatrix
    ade_rows: list[tuple[int, float, float]]
    timeline: list[tuple]
    summary: dict = field(default_factory=dict)


def fit_variant(states: np.ndarray, variant: FeatureVariant, cfg: RunConfig) -> VariantModels:
    """Cluster the training states on one variant and fit its classifier on those labels."""
    cm, assignment = fit_cluster_model(
        states, variant, cfg.k, KernelSpec.parse(cfg.cluster_kernel), cfg.cluster_restarts,
        derive_seed(cfg.seed, f"cluster:{variant.value}"),
    )
    labels = cm.risk(assignment)
    kernel = KernelSpec.parse(cfg.svm_kernel)
    clf = svm_train_multiclass(states, labels, kernel, cfg.svm_c, variant, cfg.svm_tol)
    cv = cross_validate(states, labels, kernel, cfg.svm_c, variant, cfg.cv_folds, derive_seed(cfg.seed, "svm-cv"))
    return VariantModels(variant, labels, clf, float(np.mean([f.accuracy for f in cv])))


def generate_split(cfg: RunConfig) -> tuple[GeneratedData, GeneratedData]:
    train_data = generate_dataset(cfg.dataset(seed=derive_seed(cfg.seed, "train")), cfg.lowess_span, cfg.t_max, "train")
    test_data = generate_dataset(
        cfg.dataset(count=cfg.test_count, seed=derive_seed(cfg.seed, "test")), cfg.lowess_span, cfg.t_max, "test"
    )
    return train_data, test_data


def end_to_end_evaluate(cfg: RunConfig, train_data: GeneratedData | None = None, test_data: GeneratedData | None = None) -> Report:
    """Train every stage on the training split and score risk sequences on the test split.

    The Φ_ttc classifier's predictions are scored against the Φ_all actual
    labels, so both variants answer the same question.
    """
    if train_data is None or test_data is None:
        train_data, test_data = generate_split(cfg)
    states = train_data.dataset.stacked()
    log.info("train states %d, test tracks %d", len(states), len(test_data.smoothed))
    models = {v: fit_variant(states, v, cfg) for v in (FeatureVariant.ALL, FeatureVariant.TTC_ONLY)}

    lstms: dict[int, LstmModel] = {}
    ade_rows = []
    for t_pred in sorted(set(cfg.windows()) | {cfg.t_pred}):
        lstms[t_pred] = train(train_data.smoothed, cfg.train_config(t_pred=t_pred, rng_seed=derive_seed(cfg.seed, "lstm", t_pred))).model
        le, ce = window_ades(lstms[t_pred], test_data.smoothed, t_pred)
        ade_rows.append((t_pred, float(le.mean()), float(ce.mean())))
        log.info("T_pred=%d ADE lstm %.4f cv %.4f", t_pred, ade_rows[-1][1], ade_rows[-1][2])

    keys, pred_states, true_states = window_predictions(lstms[cfg.t_pred], test_data.smoothed, cfg.t_pred, cfg.t_max)
    clf_all = models[FeatureVariant.ALL].clf
    actual = classify_windows(clf_all, keys, true_states)
    predicted = classify_windows(clf_all, keys, pred_states)
    predicted_ttc = classify_windows(models[FeatureVariant.TTC_ONLY].clf, keys, pred_states)
    cm = confusion(predicted, actual)
    cm_ttc = confusion(predicted_ttc, actual)

    behavior = {e.track.id: e.behavior for e in test_data.encounters}
    lateral = [i for i, (tid, _) in enumerate(keys) if behavior[tid] in LATERAL_BEHAVIORS]
    cm_lat = confusion([predicted[i] for i in lateral], [actual[i] for i in lateral])
    cm_lat_ttc = confusion([predicted_ttc[i] for i in lateral], [actual[i] for i in lateral])

    timeline = [
        (p.track_id, p.t, step + 1, lp.value, la.value)
        for p, a in zip(predicted, actual)
        for step, (lp, la) in enumerate(zip(p.labels, a.labels))
    ]
    summary = {
        "windows": "every valid t (overlapping); accuracies are per predicted state",
        "train_tracks": len(train_data.smoothed),
        "test_tracks": len(test_data.smoothed),
        "evaluated_windows": len(keys),
        "evaluated_states": cm.total,
        "t_pred": cfg.t_pred,
        "overall_accuracy": cm.accuracy,
        "ttc_overall_accuracy": cm_ttc.accuracy,
        "lateral_accuracy": cm_lat.accuracy,
        "ttc_lateral_accuracy": cm_lat_ttc.accuracy,
        "dangerous_error_rate": cm.error_rate(RiskLabel.DANGEROUS),
        "cv_accuracy_all": models[FeatureVariant.ALL].cv_accuracy,
        "cv_accuracy_ttc": models[FeatureVariant.TTC_ONLY].cv_accuracy,
    }
    for c, p, r in zip(cm.classes, cm.precision(), cm.recall()):
        summary[f"precision_{c.value}"] = float(p)
        summary[f"recall_{c.value}"] = float(r)
    for t_pred, le, ce in ade_rows:
        summary[f"ade_lstm_t{t_pred}"] = le
        summary[f"ade_cv_t{t_pred}"] = ce
    report = Report(cm, cm_ttc, ade_rows, timeline, summary)
    report.lstm = lstms[cfg.t_pred]
    report.models = models
    return report


def confusion_rows(cm: ConfusionMatrix):
    return [[c.value, *cm.counts[i].tolist()] for i, c in enumerate(cm.classes)]


def write_report(report: Report, out_dir) -> None:
    out = Path(out_dir)
    header = ["output\\target", *(c.value for c in report.confusion.classes)]
    write_rows(out / "confusion.csv", header, confusion_rows(report.confusion))
    write_rows(out / "confusion_ttc.csv", header, confusion_rows(report.ttc_confusion))
    write_rows(out / "ade_sweep.csv", ["t_pred", "ade_lstm", "ade_cv"], report.ade_rows)
    write_rows(out / "risk_timeline.csv", ["traj_id", "t", "step", "predicted_risk", "actual_risk"], report.timeline)
    lines = ["# end-to-end risk-sequence evaluation on held-out encounters"]
    for k, v in report.summary.items():
        if k == "windows":
            lines.append(f"# windows: {v}")
        else:
            lines.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
