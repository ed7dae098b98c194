"""Independent reference computations shared by unit and acceptance tests."""

from itertools import product

import numpy as np

from prlp.lstm import LstmModel, _rollout


def ld_loss(model: LstmModel, X, Y) -> np.longdouble:
    """MSE of the rollout evaluated entirely in extended precision."""
    m = LstmModel({k: v.astype(np.longdouble) for k, v in model.params.items()}, residual=model.residual)
    out = _rollout(m, np.asarray(X).astype(np.longdouble), Y.shape[1])
    return np.mean(np.sum((out - np.asarray(Y).astype(np.longdouble)) ** 2, axis=-1))


def fd_gradients(model: LstmModel, X, Y, step=1e-5) -> dict:
    """Central differences of the loss for every parameter entry."""
    out = {}
    for k, v in model.params.items():
        g = np.zeros(v.shape)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + step
            lp = ld_loss(model, X, Y)
            v[idx] = old - step
            lm = ld_loss(model, X, Y)
            v[idx] = old
            g[idx] = float((lp - lm) / np.longdouble(2 * step))
        out[k] = g
    return out


def max_rel_error(analytic: dict, numeric: dict, floor=0.0) -> float:
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        mask = den > 0
        if np.any(mask):
            worst = max(worst, float(np.max(np.abs(a - n)[mask] / den[mask])))
    return worst


def brute_force_wcss(X: np.ndarray, K: int) -> float:
    """Minimum within-cluster sum of squares over all assignments with K non-empty clusters."""
    n = len(X)
    best = np.inf
    # fix point 0 in cluster 0 to cut symmetric duplicates
    for rest in product(range(K), repeat=n - 1):
        lab = np.array((0,) + rest)
        if len(np.unique(lab)) != K:
            continue
        w = sum(float(np.sum((X[lab == k] - X[lab == k].mean(axis=0)) ** 2)) for k in range(K))
        best = min(best, w)
    return best


def pca_scores(X: np.ndarray, d: int) -> np.ndarray:
    """Ordinary PCA scores from the covariance eigendecomposition."""
    Xc = X - X.mean(axis=0)
    w, V = np.linalg.eigh(Xc.T @ Xc)
    order = np.argsort(w)[::-1][:d]
    return Xc @ V[:, order]


def align_signs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Flip columns of A to best match B."""
    s = np.sign(np.sum(A * B, axis=0))
    s[s == 0] = 1
    return A * s


def half_moons(n: int, noise: float, rng) -> tuple[np.ndarray, np.ndarray]:
    m = n // 2
    t1 = rng.uniform(0, np.pi, m)
    t2 = rng.uniform(0, np.pi, n - m)
    a = np.column_stack([np.cos(t1), np.sin(t1)])
    b = np.column_stack([1 - np.cos(t2), 0.5 - np.sin(t2)])
    X = np.vstack([a, b]) + rng.normal(0, noise, (n, 2))
    return X, np.r_[np.zeros(m, int), np.ones(n - m, int)]


def linear_separable_fraction_max(X: np.ndarray, y: np.ndarray, n_dirs=3600) -> float:
    """Best accuracy of any linear classifier sign(w.x + b) on a tiny set, by sweeping w and b."""
    best = 0.0
    for th in np.linspace(0, 2 * np.pi, n_dirs, endpoint=False):
        w = np.array([np.cos(th), np.sin(th)])
        proj = X @ w
        cuts = np.concatenate([[proj.min() - 1], (np.sort(proj)[:-1] + np.sort(proj)[1:]) / 2, [proj.max() + 1]])
        for c in cuts:
            pred = np.where(proj > c, 1, -1)
            best = max(best, float(np.mean(pred == y)))
    return best
