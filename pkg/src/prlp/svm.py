"""Kernel SVM risk classifier: SMO for the binary dual, one-vs-one voting."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .clustering import RISK_ORDER, KernelSpec, RiskLabel, Standardizer, kernel_matrix
from .features import FeatureVariant, select_features
from .rng import derive_rng

log = logging.getLogger(__name__)

TAU = 1e-12


class SvmNotConverged(RuntimeError):
    pass


@dataclass
class BinarySvm:
    """f(x) = sum_i coef_i K(sv_i, x) + b with coef_i = alpha_i * y_i."""

    kernel: KernelSpec
    support_vectors: np.ndarray
    coef: np.ndarray
    b: float
    C: float
    tol: float
    alpha: np.ndarray | None = None  # full dual vector, kept for diagnostics
    iterations: int = 0

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.coef) == 0:
            return np.full(len(X), self.b)
        return kernel_matrix(self.kernel, X, self.support_vectors) @ self.coef + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)


def _clip_pair(ai, aj, yi, yj, Gi, Gj, quad, C):
    """Analytic two-variable update of the dual (LIBSVM's rules for one C)."""
    if yi != yj:
        delta = (-Gi - Gj) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > 0:
            if ai > C:
                ai, aj = C, C - diff
        elif aj > C:
            aj, ai = C, C + diff
    else:
        delta = (Gi - Gj) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai, aj = C, total - C
        elif aj < 0:
            aj, ai = 0.0, total
        if total > C:
            if aj > C:
                aj, ai = C, total - C
        elif ai < 0:
            ai, aj = 0.0, total
    return ai, aj


def svm_train_binary(
    X: np.ndarray,
    y: np.ndarray,
    kernel: KernelSpec,
    C: float = 10.0,
    tol: float = 1e-3,
    max_iter: int | None = None,
) -> BinarySvm:
    """Solve the soft-margin dual by SMO with second-order working-pair selection.

    Stops when the maximal KKT violation gap drops below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not C > 0:
        raise ValueError("C must be positive")
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValueError("binary SVM needs both classes present")
    kernel = kernel.resolved(X)
    n = len(X)
    K = kernel_matrix(kernel, X, X)
    diag = np.diag(K).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    max_iter = max_iter or max(100_000, 100 * n)
    it = 0
    while True:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        m_val = np.where(up, yG, -np.inf)
        i = int(np.argmax(m_val))
        m = m_val[i]
        M = np.min(np.where(low, yG, np.inf))
        if m - M < tol:
            break
        if it >= max_iter:
            raise SvmNotConverged(f"SMO did not converge in {max_iter} iterations (gap {m - M:.3g})")
        b_t = m - yG
        a_t = diag[i] + diag - 2.0 * K[i]
        a_t = np.where(a_t > 0, a_t, TAU)
        cand = low & (yG < m)
        score = np.where(cand, -(b_t**2) / a_t, np.inf)
        j = int(np.argmin(score))
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        quad = quad if quad > 0 else TAU
        ai_old, aj_old = alpha[i], alpha[j]
        ai, aj = _clip_pair(ai_old, aj_old, y[i], y[j], G[i], G[j], quad, C)
        alpha[i], alpha[j] = ai, aj
        # G = Q alpha - e with Q_st = y_s y_t K_st
        G += y * (K[i] * (y[i] * (ai - ai_old)) + K[j] * (y[j] * (aj - aj_old)))
        it += 1

    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        rho = float(np.mean(yG[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        ub = np.min(np.where(up, yG, np.inf))
        lb = np.max(np.where(low, yG, -np.inf))
        rho = 0.5 * (ub + lb)
    sv = alpha > 0
    return BinarySvm(kernel, X[sv].copy(), (alpha * y)[sv], -rho, C, tol, alpha, it)


def kkt_violations(model: BinarySvm, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Amount by which each training point breaks its KKT condition (0 when satisfied)."""
    a = model.alpha
    yf = np.asarray(y, dtype=float) * model.decision(X)
    C = model.C
    viol = np.zeros(len(a))
    at0 = a <= 0
    atC = a >= C
    free = ~at0 & ~atC
    viol[at0] = np.maximum(1.0 - yf[at0], 0.0)
    viol[atC] = np.maximum(yf[atC] - 1.0, 0.0)
    viol[free] = np.abs(yf[free] - 1.0)
    return viol


@dataclass
class SvmModel:
    classes: list[RiskLabel]
    machines: dict[tuple[int, int], BinarySvm]
    standardizer: Standardizer
    variant: FeatureVariant
    kernel: KernelSpec
    C: float

    def _scores(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = self.standardizer.transform(select_features(np.atleast_2d(states), self.variant))
        k = len(self.classes)
        votes = np.zeros((len(X), k))
        margin = np.zeros((len(X), k))
        for (a, b), m in self.machines.items():
            f = m.decision(X)
            win_a = f >= 0
            votes[:, a] += win_a
            votes[:, b] += ~win_a
            margin[:, a] += f
            margin[:, b] -= f
        return votes, margin

    def predict_index(self, states: np.ndarray) -> np.ndarray:
        votes, margin = self._scores(states)
        top = votes == votes.max(axis=1, keepdims=True)
        return np.argmax(np.where(top, margin, -np.inf), axis=1)

    def predict(self, states: np.ndarray) -> list[RiskLabel]:
        return [self.classes[i] for i in self.predict_index(states)]


def svm_train_multiclass(
    states: np.ndarray,
    labels: Sequence[RiskLabel],
    kernel: KernelSpec = KernelSpec(),
    C: float = 10.0,
    variant: FeatureVariant = FeatureVariant.ALL,
    tol: float = 1e-3,
    standardize: bool = True,
) -> SvmModel:
    """One-vs-one machines on standardized features of ``variant``.

    ``states`` holds full 5-column feature rows; the variant picks columns.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    labels = [RiskLabel(l) for l in labels]
    if len(labels) != len(states):
        raise ValueError("states and labels differ in length")
    classes = [c for c in RISK_ORDER if c in set(labels)]
    if len(classes) < 2:
        raise ValueError("classifier needs at least 2 classes")
    X = select_features(states, variant)
    std = Standardizer.fit(X) if standardize else Standardizer.identity(X.shape[1])
    Xs = std.transform(X)
    kernel = kernel.resolved(Xs)
    idx = np.array([classes.index(l) for l in labels])
    machines = {}
    for a, b in combinations(range(len(classes)), 2):
        sel = (idx == a) | (idx == b)
        yy = np.where(idx[sel] == a, 1.0, -1.0)
        machines[(a, b)] = svm_train_binary(Xs[sel], yy, kernel, C, tol)
    return SvmModel(classes, machines, std, FeatureVariant(variant), kernel, C)


def svm_predict(model: SvmModel | None, state) -> RiskLabel:
    if model is None or not model.machines:
        raise ValueError("classifier is not fitted")
    return model.predict(np.atleast_2d(np.asarray(state, dtype=float)))[0]


@dataclass
class Evaluation:
    accuracy: float
    preds_per_sec: float
    predictions: list[RiskLabel]


def evaluate_classifier(model: SvmModel, states: np.ndarray, labels: Sequence[RiskLabel], min_predictions: int = 10_000) -> Evaluation:
    """Accuracy on a held-out set and batched prediction throughput."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if len(states) == 0:
        raise ValueError("evaluation set is empty")
    pred = model.predict(states)
    acc = float(np.mean([p == RiskLabel(l) for p, l in zip(pred, labels)]))
    reps = int(np.ceil(min_predictions / len(states)))
    bench = np.tile(states, (reps, 1))
    t0 = time.perf_counter()
    model.predict_index(bench)
    elapsed = time.perf_counter() - t0
    return Evaluation(acc, len(bench) / elapsed if elapsed > 0 else float("inf"), pred)


@dataclass
class FoldResult:
    kernel: str
    variant: str
    fold: int
    accuracy: float
    preds_per_sec: float


def cross_validate(
    states: np.ndarray,
    labels: Sequence[RiskLabel],
    kernel: KernelSpec,
    C: float = 10.0,
    variant: FeatureVariant = FeatureVariant.ALL,
    k: int = 5,
    seed: int = 0,
) -> list[FoldResult]:
    """State-level k-fold CV of the multiclass classifier."""
    states = np.asarray(states, dtype=float)
    labels = list(labels)
    n = len(states)
    if n < k:
        raise ValueError(f"cannot split {n} states into {k} folds")
    perm = derive_rng(seed, "svm-cv").permutation(n)
    out = []
    for f, test in enumerate(np.array_split(perm, k)):
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        model = svm_train_multiclass(states[mask], [labels[i] for i in np.flatnonzero(mask)], kernel, C, variant)
        ev = evaluate_classifier(model, states[test], [labels[i] for i in test])
        out.append(FoldResult(kernel.name, FeatureVariant(variant).value, f, ev.accuracy, ev.preds_per_sec))
    return out


def binary_to_dict(m: BinarySvm) -> dict:
    return {
        "support_vectors": {"shape": list(m.support_vectors.shape), "data": m.support_vectors.ravel().tolist()},
        "coef": m.coef.tolist(),
        "b": m.b,
        "C": m.C,
        "tol": m.tol,
    }


def model_to_dict(m: SvmModel) -> dict:
    return {
        "classes": [c.value for c in m.classes],
        "variant": m.variant.value,
        "kernel": m.kernel.to_dict(),
        "C": m.C,
        "standardizer": m.standardizer.to_dict(),
        "machines": [{"pair": list(pair), **binary_to_dict(b)} for pair, b in m.machines.items()],
    }


def model_from_dict(d: dict) -> SvmModel:
    kernel = KernelSpec.from_dict(d["kernel"])
    machines = {}
    for e in d["machines"]:
        sv = np.asarray(e["support_vectors"]["data"], dtype=float).reshape(e["support_vectors"]["shape"])
        machines[tuple(e["pair"])] = BinarySvm(kernel, sv, np.asarray(e["coef"], dtype=float), float(e["b"]), float(e["C"]), float(e["tol"]))
    classes = [RiskLabel(c) for c in d["classes"]]
    k = len(classes)
    if len(machines) != k * (k - 1) // 2:
        raise ValueError(f"expected {k * (k - 1) // 2} pairwise machines, found {len(machines)}")
    return SvmModel(classes, machines, Standardizer.from_dict(d["standardizer"]), FeatureVariant(d["variant"]), kernel, float(d["C"]))
