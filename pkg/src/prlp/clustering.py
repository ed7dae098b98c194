"""Risk-pattern discovery: kernel PCA + k-means, spectral clustering,
information criteria, silhouettes and semantic risk labels."""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .features import FeatureVariant, select_features
from .rng import derive_rng

log = logging.getLogger(__name__)


class RiskLabel(str, enum.Enum):
    INDEPENDENTLY_SAFE = "independently_safe"
    JOINTLY_SAFE = "jointly_safe"
    DANGEROUS = "dangerous"
    ALERT = "alert"

    @property
    def index(self) -> int:
        return RISK_ORDER.index(self)


RISK_ORDER = list(RiskLabel)


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class KernelSpec:
    """``kind`` is linear, polynomial or gaussian.

    A gaussian ``gamma`` of None is resolved when fitting to
    1 / (n_features * variance of the training matrix).
    """

    kind: str = "gaussian"
    degree: int = 2
    coef0: float = 1.0
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and self.degree not in (2, 3):
            raise ValueError("polynomial degree must be 2 or 3")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        if self.kind != "gaussian" or self.gamma is not None:
            return self
        X = np.asarray(X, dtype=float)
        var = float(X.var()) if X.size else 0.0
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return KernelSpec(self.kind, self.degree, self.coef0, gamma)

    @classmethod
    def parse(cls, text: str, gamma: float | None = None, coef0: float = 1.0) -> "KernelSpec":
        aliases = {
            "linear": ("linear", 2), "quadratic": ("polynomial", 2), "cubic": ("polynomial", 3),
            "gaussian": ("gaussian", 2), "rbf": ("gaussian", 2),
        }
        if text not in aliases:
            raise ValueError(f"unknown kernel {text!r}; expected one of {sorted(aliases)}")
        kind, degree = aliases[text]
        return cls(kind, degree, coef0, gamma if kind == "gaussian" else None)

    @property
    def name(self) -> str:
        if self.kind == "polynomial":
            return "quadratic" if self.degree == 2 else "cubic"
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "degree": self.degree, "coef0": self.coef0, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], int(d["degree"]), float(d["coef0"]), None if d["gamma"] is None else float(d["gamma"]))


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if spec.kind == "linear":
        return float(a @ b)
    if spec.kind == "polynomial":
        return float((a @ b + spec.coef0) ** spec.degree)
    if spec.gamma is None:
        raise ValueError("gaussian kernel gamma is unresolved")
    d = a - b
    return float(math.exp(-spec.gamma * float(d @ d)))


def sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "polynomial":
        return (A @ B.T + spec.coef0) ** spec.degree
    if spec.gamma is None:
        raise ValueError("gaussian kernel gamma is unresolved")
    return np.exp(-spec.gamma * sq_distances(A, B))


# ---------------------------------------------------------------- standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


# ---------------------------------------------------------------- kernel PCA


@dataclass
class KpcaModel:
    kernel: KernelSpec
    train: np.ndarray
    col_mean: np.ndarray
    total_mean: float
    eigenvalues: np.ndarray
    coef: np.ndarray  # (rows, d): eigenvector / sqrt(eigenvalue)
    d: int

    @property
    def explained_ratio(self) -> float:
        pos = np.clip(self.eigenvalues, 0.0, None)
        total = pos.sum()
        return float(pos[: self.d].sum() / total) if total > 0 else 1.0


def retained_dimension(eigenvalues: np.ndarray, mass: float = 0.95, floor: int = 2) -> int:
    pos = np.clip(eigenvalues, 0.0, None)
    total = pos.sum()
    if total <= 0:
        return min(floor, len(eigenvalues))
    d = int(np.searchsorted(np.cumsum(pos) / total, mass - 1e-12) + 1)
    return min(max(d, floor), len(eigenvalues))


def kpca_fit(S: np.ndarray, spec: KernelSpec, d: int | None = None, mass: float = 0.95) -> KpcaModel:
    """Kernel PCA on the rows of ``S``; ``d=None`` keeps ``mass`` of the eigenvalue sum (at least 2)."""
    S = np.asarray(S, dtype=float)
    n = len(S)
    if d is not None and not 1 <= d <= n:
        raise ValueError(f"retained dimension {d} outside [1, {n}]")
    spec = spec.resolved(S)
    K = kernel_matrix(spec, S, S)
    col_mean = K.mean(axis=0)
    total_mean = float(col_mean.mean())
    Kc = K - col_mean[None, :] - col_mean[:, None] + total_mean
    Kc = 0.5 * (Kc + Kc.T)
    try:
        w, V = linalg.eigh(Kc)
    except linalg.LinAlgError as exc:
        raise RuntimeError(f"kernel PCA eigendecomposition failed: {exc}") from exc
    w, V = w[::-1], V[:, ::-1]
    if d is None:
        d = retained_dimension(w, mass)
    keep = w[:d]
    # tiny or negative eigenvalues carry no variance; give them zero weight
    tol = max(1e-12 * max(float(w[0]), 0.0), 1e-300)
    scale = np.where(keep > tol, 1.0 / np.sqrt(np.where(keep > tol, keep, 1.0)), 0.0)
    coef = V[:, :d] * scale[None, :]
    return KpcaModel(spec, S.copy(), col_mean, total_mean, w, coef, d)


def kpca_project(model: KpcaModel, s) -> np.ndarray:
    """Scores of one row (returns shape (d,)) or of a matrix of rows."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    if s2.shape[1] != model.train.shape[1]:
        raise ValueError(f"dimension mismatch: {s2.shape[1]} vs {model.train.shape[1]}")
    k = kernel_matrix(model.kernel, s2, model.train)
    kc = k - model.col_mean[None, :] - k.mean(axis=1, keepdims=True) + model.total_mean
    out = kc @ model.coef
    return out[0] if single else out


def kpca_scores(model: KpcaModel) -> np.ndarray:
    return kpca_project(model, model.train)


# ---------------------------------------------------------------- k-means


@dataclass
class KMeansModel:
    K: int
    centroids: np.ndarray
    wcss: float
    history: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return np.argmin(sq_distances(np.atleast_2d(X), self.centroids), axis=1)


def wcss(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    return float(np.sum((points - centroids[labels]) ** 2))


def _kmeanspp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    idx = [int(rng.integers(n))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        nxt = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return X[idx].copy()


def _transfer_pass(X: np.ndarray, labels: np.ndarray, C: np.ndarray) -> bool:
    """Single-point moves that lower WCSS (Hartigan's criterion). Updates in place."""
    K = len(C)
    counts = np.bincount(labels, minlength=K).astype(float)
    moved = False
    for j in range(len(X)):
        i = labels[j]
        if counts[i] <= 1:
            continue
        d2 = np.sum((C - X[j]) ** 2, axis=1)
        gain_out = counts[i] / (counts[i] - 1.0) * d2[i]
        cost_in = counts / (counts + 1.0) * d2
        cost_in[i] = np.inf
        k = int(np.argmin(cost_in))
        if cost_in[k] < gain_out * (1.0 - 1e-12):
            C[i] = (C[i] * counts[i] - X[j]) / (counts[i] - 1.0)
            C[k] = (C[k] * counts[k] + X[j]) / (counts[k] + 1.0)
            counts[i] -= 1.0
            counts[k] += 1.0
            labels[j] = k
            moved = True
    return moved


def lloyd(X: np.ndarray, centroids: np.ndarray, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations, polished with single-point transfers once the assignment is stable.

    Returns (centroids, labels, WCSS after every iteration).
    """
    X = np.asarray(X, dtype=float)
    C = np.array(centroids, dtype=float)
    K = len(C)
    labels = None
    history: list[float] = []
    for _ in range(max_iter):
        new = np.argmin(sq_distances(X, C), axis=1)
        for k in range(K):
            if np.any(new == k):
                continue
            # re-seed an empty cluster with the point farthest from its centroid
            far = np.sum((X - C[new]) ** 2, axis=1)
            far[np.bincount(new, minlength=K)[new] <= 1] = -1.0
            j = int(np.argmax(far))
            new[j] = k
            C[k] = X[j]
        for k in range(K):
            C[k] = X[new == k].mean(axis=0)
        history.append(wcss(X, new, C))
        if labels is not None and np.array_equal(new, labels):
            if not _transfer_pass(X, new, C):
                break
            for k in range(K):
                C[k] = X[new == k].mean(axis=0)
            history.append(wcss(X, new, C))
        labels = new
    return C, labels, history


def _kmeans_run(X, K, seed, r, max_iter):
    rng = derive_rng(seed, "kmeans", r)
    C0 = _kmeanspp(X, K, rng)
    return lloyd(X, C0, max_iter)


def kmeans(
    points: np.ndarray,
    K: int,
    restarts: int = 10,
    seed: int = 0,
    max_iter: int = 300,
    jobs: int = 1,
) -> tuple[KMeansModel, np.ndarray]:
    """Best of ``restarts`` k-means++ seeded Lloyd runs by WCSS."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > len(X):
        raise ValueError(f"K={K} exceeds the number of points ({len(X)})")
    runs = range(max(restarts, 1))
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(lambda r: _kmeans_run(X, K, seed, r, max_iter), runs))
    else:
        results = [_kmeans_run(X, K, seed, r, max_iter) for r in runs]
    best = min(range(len(results)), key=lambda r: (results[r][2][-1], r))
    C, labels, hist = results[best]
    return KMeansModel(K, C, hist[-1], hist), labels


# ---------------------------------------------------------------- spectral


class Laplacian(str, enum.Enum):
    UNNORMALIZED = "unnormalized"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class SpectralParams:
    K: int = 4
    k_nn: int = 10
    sigma_s: float | None = None
    laplacian: Laplacian = Laplacian.SYMMETRIC

    def __post_init__(self):
        if self.k_nn < 1:
            raise ValueError("k_nn must be at least 1")
        if self.sigma_s is not None and not self.sigma_s > 0:
            raise ValueError("sigma_s must be positive")
        object.__setattr__(self, "laplacian", Laplacian(self.laplacian))


def knn_graph(S: np.ndarray, k_nn: int) -> np.ndarray:
    """Symmetrized k-nearest-neighbour adjacency (boolean, no self edges)."""
    S = np.asarray(S, dtype=float)
    n = len(S)
    if n <= k_nn:
        raise ValueError(f"k-NN graph needs more than k_nn={k_nn} points, got {n}")
    D = sq_distances(S, S)
    np.fill_diagonal(D, np.inf)
    nn = np.argsort(D, axis=1, kind="stable")[:, :k_nn]
    A = np.zeros((n, n), dtype=bool)
    A[np.repeat(np.arange(n), k_nn), nn.ravel()] = True
    return A | A.T


def laplacian(W: np.ndarray, kind: Laplacian | str = Laplacian.SYMMETRIC) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    deg = W.sum(axis=1)
    if Laplacian(kind) is Laplacian.UNNORMALIZED:
        return np.diag(deg) - W
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    return np.eye(len(W)) - inv[:, None] * W * inv[None, :]


def similarity_graph(S: np.ndarray, k_nn: int, sigma_s: float | None = None) -> tuple[np.ndarray, float]:
    S = np.asarray(S, dtype=float)
    A = knn_graph(S, k_nn)
    dist = np.sqrt(sq_distances(S, S))
    if sigma_s is None:
        connected = dist[np.triu(A, 1)]
        sigma_s = float(np.median(connected)) if connected.size else 1.0
        if sigma_s <= 0:
            sigma_s = 1.0
    W = np.where(A, np.exp(-(dist**2) / (2.0 * sigma_s**2)), 0.0)
    return W, sigma_s


@dataclass
class SpectralResult:
    labels: np.ndarray
    embedding: np.ndarray
    eigenvalues: np.ndarray
    sigma_s: float


def spectral_cluster(S: np.ndarray, params: SpectralParams, seed: int = 0, restarts: int = 10, n_eigen: int | None = None) -> SpectralResult:
    S = np.asarray(S, dtype=float)
    if len(S) < params.K:
        raise ValueError(f"K={params.K} exceeds the number of points ({len(S)})")
    W, sigma = similarity_graph(S, params.k_nn, params.sigma_s)
    L = laplacian(W, params.laplacian)
    m = max(params.K, n_eigen or 0)
    m = min(m, len(S))
    try:
        w, V = linalg.eigh(L, subset_by_index=[0, m - 1])
    except linalg.LinAlgError as exc:
        raise RuntimeError(f"Laplacian eigendecomposition failed: {exc}") from exc
    U = V[:, : params.K]
    if params.laplacian is Laplacian.SYMMETRIC:
        norms = np.linalg.norm(U, axis=1, keepdims=True)
        U = U / np.where(norms > 0, norms, 1.0)
    _, labels = kmeans(U, params.K, restarts, seed)
    return SpectralResult(labels, U, w, sigma)


def eigengap_k(eigenvalues: np.ndarray, k_max: int) -> int:
    """K suggested by the largest gap among the smallest Laplacian eigenvalues."""
    w = np.sort(np.asarray(eigenvalues))[: k_max + 1]
    gaps = np.diff(w)
    return int(np.argmax(gaps[1:]) + 2) if len(gaps) > 1 else 1


# ---------------------------------------------------------------- validation


def aic(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    points = np.asarray(points, dtype=float).reshape(len(points), -1)
    centroids = np.asarray(centroids, dtype=float).reshape(len(centroids), -1)
    K, N = centroids.shape
    return wcss(points, np.asarray(labels), centroids) + 2.0 * K * N


def bic(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    points = np.asarray(points, dtype=float).reshape(len(points), -1)
    centroids = np.asarray(centroids, dtype=float).reshape(len(centroids), -1)
    K, N = centroids.shape
    return wcss(points, np.asarray(labels), centroids) + math.log(len(points)) * K * N


def silhouette(points: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-point silhouette scores and their mean; singleton clusters score 0."""
    X = np.asarray(points, dtype=float).reshape(len(points), -1)
    labels = np.asarray(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    n = len(X)
    counts = np.bincount(inv)
    sums = np.zeros((n, len(uniq)))
    for start in range(0, n, 1024):
        D = np.sqrt(sq_distances(X[start : start + 1024], X))
        for c in range(len(uniq)):
            sums[start : start + 1024, c] = D[:, inv == c].sum(axis=1)
    own = counts[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    means = sums / counts[None, :]
    means[np.arange(n), inv] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return s, float(s.mean())


def adjusted_rand_index(a: Sequence, b: Sequence) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    index = comb2(table).sum()
    rows = comb2(table.sum(axis=1)).sum()
    cols = comb2(table.sum(axis=0)).sum()
    total = comb2(len(a))
    expected = rows * cols / total if total > 0 else 0.0
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


# ---------------------------------------------------------------- model selection


@dataclass
class CriterionRow:
    K: int
    aic: float
    bic: float
    silhouette: float


@dataclass
class Selection:
    best_k: int
    table: list[CriterionRow]
    eigengap_k: int | None = None


def _fit_labels(Z: np.ndarray, K: int, method: str, restarts: int, seed: int, spectral: SpectralParams | None):
    if method == "kpca-kmc":
        model, labels = kmeans(Z, K, restarts, seed)
        return Z, labels, model.centroids
    params = SpectralParams(K, (spectral or SpectralParams()).k_nn, (spectral or SpectralParams()).sigma_s, (spectral or SpectralParams()).laplacian)
    res = spectral_cluster(Z, params, seed, restarts)
    cents = np.vstack([res.embedding[res.labels == k].mean(axis=0) for k in range(K)])
    return res.embedding, res.labels, cents


def select_k(
    points: np.ndarray,
    k_range: Iterable[int],
    method: str = "kpca-kmc",
    restarts: int = 10,
    seed: int = 0,
    kernel: KernelSpec = KernelSpec(),
    standardize: bool = True,
    spectral: SpectralParams | None = None,
    jobs: int = 1,
) -> Selection:
    """Fit every K and pick the minimum-BIC one (ties go to the smaller K).

    Silhouettes are measured in the (standardized) input space so they are
    comparable across methods.
    """
    X = np.asarray(points, dtype=float)
    ks = list(k_range)
    if not ks or min(ks) < 2 or max(ks) > len(X):
        raise ValueError(f"K range must lie within [2, {len(X)}]")
    Xs = Standardizer.fit(X).transform(X) if standardize else X
    if method == "kpca-kmc":
        Z = kpca_scores(kpca_fit(Xs, kernel))
    elif method == "spectral":
        Z = Xs
    else:
        raise ValueError(f"unknown clustering method {method!r}")

    def one(K):
        space, labels, cents = _fit_labels(Z, K, method, restarts, seed, spectral)
        return CriterionRow(K, aic(space, labels, cents), bic(space, labels, cents), silhouette(Xs, labels)[1])

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            table = list(ex.map(one, ks))
    else:
        table = [one(K) for K in ks]
    best = min(table, key=lambda r: (r.bic, r.K)).K
    gap = None
    if method == "spectral":
        sp = spectral or SpectralParams()
        W, _ = similarity_graph(Xs, sp.k_nn, sp.sigma_s)
        w = linalg.eigh(laplacian(W, sp.laplacian), eigvals_only=True, subset_by_index=[0, min(max(ks) + 1, len(Xs)) - 1])
        gap = eigengap_k(w, max(ks))
    return Selection(best, table, gap)


@dataclass
class MethodComparison:
    method: str
    silhouettes: dict[str, float]
    per_cluster: dict[str, list[float]]


def compare_methods(
    points: np.ndarray,
    K: int,
    restarts: int = 10,
    seed: int = 0,
    kernel: KernelSpec = KernelSpec(),
    spectral: SpectralParams | None = None,
    standardize: bool = True,
) -> MethodComparison:
    """Cluster with both methods at ``K``; keep the one with the higher mean silhouette."""
    if K < 2:
        raise ValueError("method comparison needs K >= 2")
    X = np.asarray(points, dtype=float)
    Xs = Standardizer.fit(X).transform(X) if standardize else X
    Z = kpca_scores(kpca_fit(Xs, kernel))
    _, km_labels = kmeans(Z, K, restarts, seed)
    sp = spectral or SpectralParams()
    sc = spectral_cluster(Xs, SpectralParams(K, sp.k_nn, sp.sigma_s, sp.laplacian), seed, restarts)
    sils, per = {}, {}
    for name, labels in (("kpca-kmc", km_labels), ("spectral", sc.labels)):
        s, mean = silhouette(Xs, labels)
        sils[name] = mean
        per[name] = [float(s[labels == k].mean()) if np.any(labels == k) else 0.0 for k in range(K)]
    method = "kpca-kmc" if sils["kpca-kmc"] >= sils["spectral"] else "spectral"
    return MethodComparison(method, sils, per)


# ---------------------------------------------------------------- semantic labels


def cluster_profiles(states: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    """(K, 5) medians of the raw features per cluster."""
    states = np.asarray(states, dtype=float)
    return np.vstack([np.median(states[labels == k], axis=0) for k in range(K)])


def assign_semantic_labels(profiles: np.ndarray) -> dict[int, RiskLabel]:
    """Name four clusters from their feature medians (columns px, py, vx, vy, ttc).

    The two lowest-TTC clusters are the risky pair: the nearer one (smaller
    longitudinal distance) is Dangerous, the other Alert. Of the two
    high-TTC clusters the nearer is Jointly Safe, the other Independently Safe.
    """
    profiles = np.asarray(profiles, dtype=float)
    if len(profiles) != 4:
        raise ValueError(f"semantic labelling needs exactly 4 clusters, got {len(profiles)}")
    by_ttc = sorted(range(4), key=lambda k: (profiles[k, 4], profiles[k, 0], tuple(profiles[k])))
    low, high = by_ttc[:2], by_ttc[2:]
    low.sort(key=lambda k: (profiles[k, 0], tuple(profiles[k])))
    high.sort(key=lambda k: (profiles[k, 0], tuple(profiles[k])))
    return {
        low[0]: RiskLabel.DANGEROUS,
        low[1]: RiskLabel.ALERT,
        high[0]: RiskLabel.JOINTLY_SAFE,
        high[1]: RiskLabel.INDEPENDENTLY_SAFE,
    }


# ---------------------------------------------------------------- fitted labeller


@dataclass
class ClusterModel:
    """KPCA + k-means labeller fitted on one feature variant.

    ``labels`` maps cluster index to risk level; ``profiles`` holds the
    per-cluster raw-feature medians the labels were derived from.
    """

    variant: FeatureVariant
    standardizer: Standardizer
    kpca: KpcaModel
    kmeans: KMeansModel
    labels: dict[int, RiskLabel]
    profiles: np.ndarray
    method: str = "kpca-kmc"

    @property
    def K(self) -> int:
        return self.kmeans.K

    def assign(self, states: np.ndarray) -> np.ndarray:
        Z = kpca_project(self.kpca, self.standardizer.transform(select_features(np.atleast_2d(states), self.variant)))
        return self.kmeans.predict(Z)

    def risk(self, clusters: np.ndarray) -> list[RiskLabel]:
        return [self.labels[int(c)] for c in clusters]


def fit_cluster_model(
    states: np.ndarray,
    variant: FeatureVariant = FeatureVariant.ALL,
    K: int = 4,
    kernel: KernelSpec = KernelSpec(),
    restarts: int = 10,
    seed: int = 0,
    standardize: bool = True,
    label_map: dict[int, RiskLabel] | None = None,
) -> tuple[ClusterModel, np.ndarray]:
    """Fit the deployed KPCA-KMC labeller; returns the model and training assignment."""
    states = np.asarray(states, dtype=float)
    X = select_features(states, variant)
    std = Standardizer.fit(X) if standardize else Standardizer.identity(X.shape[1])
    kp = kpca_fit(std.transform(X), kernel)
    Z = kpca_scores(kp)
    km, assignment = kmeans(Z, K, restarts, seed)
    profiles = cluster_profiles(states, assignment, K)
    if label_map is None:
        label_map = assign_semantic_labels(profiles)
    elif sorted(label_map) != list(range(K)):
        raise ValueError(f"label map must cover clusters 0..{K - 1}")
    model = ClusterModel(FeatureVariant(variant), std, kp, km, dict(label_map), profiles)
    return model, assignment
