"""Acceptance criteria 1-11, one test each.

Every test prints a single ``CRITERION n: PASS|FAIL ...`` line (visible in
``pytest -v`` output) and then asserts the same condition.
"""

import csv
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import align_signs, brute_force_wcss, fd_gradients, half_moons, max_rel_error, pca_scores
from prlp.cli import main
from prlp.clustering import (
    KernelSpec,
    Laplacian,
    SpectralParams,
    adjusted_rand_index,
    aic,
    bic,
    compare_methods,
    kmeans,
    kpca_fit,
    kpca_scores,
    laplacian,
    select_k,
    silhouette,
    similarity_graph,
    spectral_cluster,
)
from prlp.config import load_config
from prlp.features import FeatureVariant, compute_ttc, select_features
from prlp.io import load_model
from prlp.lstm import LstmModel, gradients_bptt, model_from_dict, window_ades
from prlp.pipeline import fit_variant, generate_split
from prlp.sim import Behavior, Scenario, planted_states
from prlp.svm import evaluate_classifier, kkt_violations, svm_train_binary, svm_train_multiclass

DEMO = Path(__file__).resolve().parent.parent / "configs" / "demo.conf"


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def demo_runs(tmp_path_factory):
    """The demo pipeline run twice from separate working directories with identical arguments."""
    import os

    dirs = []
    cwd = os.getcwd()
    try:
        for name in ("run1", "run2"):
            d = tmp_path_factory.mktemp(name)
            os.chdir(d)
            t0 = time.perf_counter()
            assert main(["evaluate", "--config", str(DEMO), "--out", "out"]) == 0
            dirs.append((d / "out", time.perf_counter() - t0))
    finally:
        os.chdir(cwd)
    return dirs


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def read_summary(path):
    return dict(l.split("=", 1) for l in Path(path).read_text().splitlines() if l and not l.startswith("#"))


def test_c01_gradient_oracle(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        H = (2, 4, 8)[i % 3]
        m = LstmModel.init_random(H, rng, residual=bool(i % 2))
        for k in m.params:
            m.params[k] += rng.normal(0, 0.3, m.params[k].shape)
        L = int(rng.integers(1, 5))
        T = int(rng.integers(1, 7 - L))
        X = rng.normal(size=(2, L, 2))
        Y = rng.normal(size=(2, T, 2))
        _, g = gradients_bptt(m, X, Y)
        worst = max(worst, max_rel_error(g, fd_gradients(m, X, Y, 1e-5)))
    dt = time.perf_counter() - t0
    verdict(capsys, 1, worst < 1e-5 and dt < 60, f"max relative error {worst:.2e} over 20 models, {dt:.1f}s")


def test_c02_kmeans_optimality(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        rng = np.random.default_rng(2000 + i)
        n = int(rng.integers(3, 9))
        K = int(rng.integers(1, min(3, n) + 1))
        X = rng.normal(size=(n, int(rng.integers(1, 4)))) * rng.uniform(0.2, 5)
        got = kmeans(X, K, restarts=20, seed=i)[0].wcss
        worst = max(worst, got - brute_force_wcss(X, K))
    dt = time.perf_counter() - t0
    verdict(capsys, 2, worst <= 1e-9 and dt < 60, f"max WCSS excess over brute force {worst:.2e} on 50 instances, {dt:.1f}s")


def test_c03_hand_values(capsys):
    _, sil = silhouette(np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]]), np.array([0, 0, 1, 1]))
    pts, lab, cent = np.array([[0.0], [2.0]]), np.array([0, 0]), np.array([[1.0]])
    a, b = aic(pts, lab, cent), bic(pts, lab, cent)
    ttc = compute_ttc((10, 0), (-2, 0), 10)
    rec, tan = compute_ttc((10, 0), (1, 0), 10), compute_ttc((10, 0), (0, 2), 10)
    ok = (abs(sil - 0.9002) <= 1e-3 and a == 4.0 and abs(b - (2 + np.log(2))) <= 1e-12
          and abs(ttc - 5.0) <= 1e-12 and rec == 10.0 and tan == 10.0)
    verdict(capsys, 3, ok, f"silhouette {sil:.4f}, AIC {a}, BIC {b:.12f}, TTC {ttc}, receding {rec}, tangential {tan}")


def test_c04_kpca_pca(capsys):
    worst = 0.0
    for i in range(10):
        rng = np.random.default_rng(3000 + i)
        n, p = int(rng.integers(10, 60)), int(rng.integers(2, 6))
        X = rng.normal(size=(n, p)) @ rng.normal(size=(p, p)) + rng.normal(0, 3, p)
        d = int(rng.integers(1, p + 1))
        Z = kpca_scores(kpca_fit(X, KernelSpec("linear"), d=d))
        ref = pca_scores(X, d)
        worst = max(worst, float(np.abs(align_signs(Z, ref) - ref).max()))
    verdict(capsys, 4, worst <= 1e-8, f"max |KPCA - PCA| up to sign {worst:.2e} on 10 datasets")


def test_c05_spectral(capsys):
    rng = np.random.default_rng(4000)
    X = np.vstack([rng.normal(0, 0.5, (15, 2)), rng.normal([40, 40], 0.5, (15, 2))])
    truth = np.repeat([0, 1], 15)
    W, _ = similarity_graph(X, 4)
    w = np.linalg.eigvalsh(laplacian(W, Laplacian.UNNORMALIZED))
    zeros = int(np.sum(np.abs(w) < 1e-8))
    ari_graph = adjusted_rand_index(spectral_cluster(X, SpectralParams(2, 4), seed=0).labels, truth)
    Xm, tm = half_moons(200, 0.05, np.random.default_rng(4001))
    ari_sc = adjusted_rand_index(spectral_cluster(Xm, SpectralParams(2, 10), seed=0).labels, tm)
    ari_km = adjusted_rand_index(kmeans(Xm, 2, restarts=10, seed=0)[1], tm)
    ok = zeros == 2 and abs(w[2]) > 1e-8 and ari_graph == 1.0 and ari_sc >= 0.95 and ari_km < 0.95
    verdict(capsys, 5, ok, f"zero eigenvalues {zeros}, component ARI {ari_graph}, moons ARI spectral {ari_sc:.3f} vs k-means {ari_km:.3f}")


def test_c06_svm(capsys):
    two = svm_train_binary(np.array([[-1.0, 0], [1, 0]]), np.array([-1.0, 1]), KernelSpec("linear"), C=10)
    dual_ok = np.allclose(two.alpha, 0.5, atol=1e-6) and abs(two.b) <= 1e-6

    machines = [(two, np.array([[-1.0, 0], [1, 0]]), np.array([-1.0, 1]))]
    xor_X, xor_y = np.array([[0.0, 0], [1, 1], [0, 1], [1, 0]]), np.array([1.0, 1, -1, -1])
    xor = svm_train_binary(xor_X, xor_y, KernelSpec(gamma=1.0), C=10)
    machines.append((xor, xor_X, xor_y))
    xor_acc = float(np.mean(xor.predict(xor_X) == xor_y))

    states, regime = planted_states(40, seed=6)
    labels = [("independently_safe", "jointly_safe", "dangerous", "alert")[r] for r in regime]
    model = svm_train_multiclass(states, labels)
    Xs = model.standardizer.transform(select_features(states, model.variant))
    cls = np.array([[c.value for c in model.classes].index(l) for l in labels])
    for (a, b), m in model.machines.items():
        sel = (cls == a) | (cls == b)
        machines.append((m, Xs[sel], np.where(cls[sel] == a, 1.0, -1.0)))
    worst = max(float(kkt_violations(m, X, y).max()) for m, X, y in machines)
    eq = max(abs(float(m.alpha @ y)) for m, _, y in machines)
    ok = dual_ok and worst <= 1e-3 and eq < 1e-9 and xor_acc == 1.0
    verdict(capsys, 6, ok, f"2-point alpha {two.alpha.round(6).tolist()} b {two.b:.1e}; max KKT violation {worst:.1e} over {len(machines)} machines; XOR accuracy {xor_acc}")


def test_c07_model_selection(capsys):
    t0 = time.perf_counter()
    states, _ = planted_states(125, seed=7)
    sel = select_k(states, range(2, 9), seed=1)
    cmp = compare_methods(states, 4, seed=1)
    dt = time.perf_counter() - t0
    sil = cmp.silhouettes["kpca-kmc"]
    ok = sel.best_k == 4 and sil >= 0.4 and dt < 300
    verdict(capsys, 7, ok, f"{len(states)} states: BIC selects K={sel.best_k}; KPCA-KMC silhouette {sil:.3f} (spectral {cmp.silhouettes['spectral']:.3f}), {dt:.1f}s")


def test_c08_classifier(capsys):
    cfg = load_config(DEMO)
    train_data, _ = generate_split(cfg)
    states = train_data.dataset.stacked()
    vm = fit_variant(states, FeatureVariant.ALL, cfg)
    ev = evaluate_classifier(vm.clf, states, vm.cluster_labels, min_predictions=20_000)
    ok = vm.cv_accuracy >= 0.95 and ev.preds_per_sec >= 5000
    verdict(capsys, 8, ok, f"5-fold CV accuracy {vm.cv_accuracy:.4f} on {len(states)} states; throughput {ev.preds_per_sec:,.0f} states/s")


def test_c09_trajectory_prediction(capsys, demo_runs):
    out, dt = demo_runs[0]
    rows = {int(r[0]): (float(r[1]), float(r[2])) for r in read_csv(out / "ade_sweep.csv")[1:]}
    cfg = load_config(DEMO)
    lstm = model_from_dict(load_model(out / "lstm.json", "lstm"))
    _, test_data = generate_split(cfg)
    hard = [tr for e, tr in zip(test_data.encounters, test_data.smoothed)
            if e.scenario is Scenario.TURNING_RIGHT or e.behavior is Behavior.CROSS_WITH_HESITATION]
    le, ce = window_ades(lstm, hard, cfg.t_pred)
    t5 = rows[5][0]
    ok = t5 < 0.5 and le.mean() < ce.mean() and rows[1][0] < t5 and dt < 900
    verdict(capsys, 9, ok, f"ADE T=5 {t5:.4f} m (CV {rows[5][1]:.4f}); turn/hesitation subset LSTM {le.mean():.4f} vs CV {ce.mean():.4f} ({len(le)} windows); ADE T=1 {rows[1][0]:.4f}; demo run {dt:.0f}s")


def test_c10_end_to_end(capsys, demo_runs):
    out, _ = demo_runs[0]
    acc = float(read_summary(out / "summary.txt")["overall_accuracy"])
    cm = read_csv(out / "confusion.csv")
    classes = cm[0][1:]
    counts = np.array([[int(x) for x in r[1:]] for r in cm[1:]])
    timeline = read_csv(out / "risk_timeline.csv")
    head = timeline[0]
    pi, ai = head.index("predicted_risk"), head.index("actual_risk")
    pred = [r[pi] for r in timeline[1:]]
    act = [r[ai] for r in timeline[1:]]
    marg = all(counts[i].sum() == pred.count(c) and counts[:, i].sum() == act.count(c) for i, c in enumerate(classes))
    ok = acc >= 0.80 and marg and counts.sum() == len(pred)
    verdict(capsys, 10, ok, f"overall accuracy {acc:.4f} over {counts.sum()} states; marginals consistent: {marg}")


def test_c11_determinism(capsys, demo_runs):
    (a, _), (b, _) = demo_runs
    names = sorted(p.name for p in a.iterdir())
    same = names == sorted(p.name for p in b.iterdir())
    diff = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    ok = same and not diff and len(names) >= 5
    verdict(capsys, 11, ok, f"{len(names)} artifacts compared, differing: {diff or 'none'}")
