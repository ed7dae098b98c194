"""Single-layer LSTM trajectory predictor with hand-written BPTT.

The network reads a normalized position prefix, then rolls out
``t_pred`` future positions autoregressively: each prediction is fed back
as the next input. Everything runs on numpy in float64.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .features import PedestrianTrack
from .rng import derive_rng

log = logging.getLogger(__name__)

GATES = ("f", "i", "o", "c")
PARAM_NAMES = ("W_f", "W_i", "W_o", "W_c", "b_f", "b_i", "b_o", "b_c", "W_fc", "b_fc")
MIN_OBSERVED = 4


class TrainingDiverged(FloatingPointError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmModel:
    """Gate weights act on the concatenation [h(t-1), p(t)].

    Network units are x_n = (x - origin) / scale, where the origin is the
    dataset ``mean`` or, with ``anchored``, the last observed position of the
    window being predicted. With ``residual`` the output layer predicts the
    step from the current input rather than the absolute next position.
    """

    params: dict[str, np.ndarray]
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scale: np.ndarray = field(default_factory=lambda: np.ones(2))
    residual: bool = False
    anchored: bool = False

    def __post_init__(self):
        H = self.hidden_dim
        for g in GATES:
            if self.params[f"W_{g}"].shape != (H, H + 2) or self.params[f"b_{g}"].shape != (H,):
                raise ValueError(f"gate {g}: inconsistent dimensions for hidden_dim {H}")
        if self.params["W_fc"].shape != (2, H) or self.params["b_fc"].shape != (2,):
            raise ValueError("output layer dimensions inconsistent")
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"parameter {k} has non-finite entries")
        self.mean = np.asarray(self.mean, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)

    @property
    def hidden_dim(self) -> int:
        return self.params["b_f"].shape[0]

    @classmethod
    def zeros(cls, hidden_dim: int, residual: bool = False) -> "LstmModel":
        H = hidden_dim
        p = {f"W_{g}": np.zeros((H, H + 2)) for g in GATES}
        p.update({f"b_{g}": np.zeros(H) for g in GATES})
        p["W_fc"] = np.zeros((2, H))
        p["b_fc"] = np.zeros(2)
        return cls(p, residual=residual)

    @classmethod
    def init_random(cls, hidden_dim: int, rng: np.random.Generator, residual: bool = False) -> "LstmModel":
        H = hidden_dim
        bound = 1.0 / math.sqrt(H + 2)
        p = {f"W_{g}": rng.uniform(-bound, bound, (H, H + 2)) for g in GATES}
        p.update({f"b_{g}": np.zeros(H) for g in GATES})
        p["b_f"] = np.ones(H)
        p["W_fc"] = rng.uniform(-1.0 / math.sqrt(H), 1.0 / math.sqrt(H), (2, H))
        p["b_fc"] = np.zeros(2)
        return cls(p, residual=residual)

    def copy(self) -> "LstmModel":
        return LstmModel(
            {k: v.copy() for k, v in self.params.items()},
            self.mean.copy(), self.scale.copy(), self.residual, self.anchored,
        )

    def origin(self, prefixes: np.ndarray) -> np.ndarray:
        """Per-window origin, shape (..., 1, 2) for prefixes of shape (..., L, 2)."""
        prefixes = np.asarray(prefixes, dtype=float)
        if self.anchored:
            return prefixes[..., -1:, :]
        return np.broadcast_to(self.mean, prefixes[..., :1, :].shape)

    def normalize(self, pts, origin):
        return (np.asarray(pts, dtype=float) - origin) / self.scale

    def denormalize(self, pts, origin):
        return np.asarray(pts, dtype=float) * self.scale + origin


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int, batch: int | None = None) -> "LstmState":
        shape = (hidden_dim,) if batch is None else (batch, hidden_dim)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 32
    learning_rate: float = 0.003
    momentum: float = 0.9
    epochs: int = 300
    batch_size: int = 64
    clip_norm: float = 5.0
    rng_seed: int = 0
    t_pred: int = 5
    residual: bool = True
    anchored: bool = True
    optimizer: str = "adam"

    def validate(self) -> None:
        for name in ("hidden_dim", "learning_rate", "epochs", "batch_size", "clip_norm", "t_pred"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _gates(model: LstmModel, h_prev, c_prev, x):
    p = model.params
    z = np.concatenate([h_prev, x], axis=-1)
    f = sigmoid(z @ p["W_f"].T + p["b_f"])
    i = sigmoid(z @ p["W_i"].T + p["b_i"])
    o = sigmoid(z @ p["W_o"].T + p["b_o"])
    g = np.tanh(z @ p["W_c"].T + p["b_c"])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return z, f, i, o, g, c, tc, h


def cell_forward(model: LstmModel, state: LstmState, x) -> LstmState:
    """One LSTM step on a (normalized) position, or a batch of them."""
    x = np.asarray(x, dtype=float)
    H = model.hidden_dim
    if state.h.shape[-1] != H or state.c.shape[-1] != H:
        raise ValueError(f"state dimension {state.h.shape[-1]} does not match hidden_dim {H}")
    if x.shape[-1] != 2:
        raise ValueError(f"input must be 2-dimensional, got {x.shape}")
    *_, c, _, h = _gates(model, state.h, state.c, x)
    return LstmState(h, c)


def _rollout(model: LstmModel, X: np.ndarray, t_pred: int, cache: list | None = None) -> np.ndarray:
    """Batched forward pass in network units. X: (B, L, 2) -> (B, t_pred, 2)."""
    B, L, _ = X.shape
    H = model.hidden_dim
    p = model.params
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    out = np.empty((B, t_pred, 2), dtype=X.dtype)
    for k in range(L + t_pred - 1):
        x = X[:, k] if k < L else out[:, k - L]
        h_prev, c_prev = h, c
        z, f, i, o, g, c, tc, h = _gates(model, h_prev, c_prev, x)
        if cache is not None:
            cache.append((z, c_prev, f, i, o, g, tc, h))
        if k >= L - 1:
            y = h @ p["W_fc"].T + p["b_fc"]
            if model.residual:
                y = y + x
            out[:, k - L + 1] = y
    return out


def sequence_forward(model: LstmModel, inputs, t_pred: int) -> np.ndarray:
    """Predict ``t_pred`` positions (metres) after an observed prefix (metres)."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or len(inputs) < 1:
        raise ValueError("need a non-empty (n, 2) observed prefix")
    if t_pred < 1:
        raise ValueError("t_pred must be at least 1")
    origin = model.origin(inputs)
    Xn = model.normalize(inputs, origin)[None]
    return model.denormalize(_rollout(model, Xn, t_pred)[0], origin)


def predict_batch(model: LstmModel, prefixes: np.ndarray, t_pred: int) -> np.ndarray:
    """Rollout for equal-length prefixes, shape (B, L, 2) in metres."""
    origin = model.origin(prefixes)
    Xn = model.normalize(prefixes, origin)
    return model.denormalize(_rollout(model, Xn, t_pred), origin)


def loss_mse(predicted, actual) -> float:
    """Mean squared Euclidean error over all points."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {actual.shape}")
    return float(np.mean(np.sum((predicted - actual) ** 2, axis=-1)))


def ade(predicted, actual) -> float:
    """Average displacement error: mean Euclidean distance over points."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise ValueError("ADE of an empty sequence")
    return float(np.mean(np.linalg.norm(predicted - actual, axis=-1)))


def gradients_bptt(model: LstmModel, X: np.ndarray, Y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients of ``loss_mse`` in network units.

    X: (B, L, 2) normalized prefixes; Y: (B, T, 2) normalized targets. A
    single sequence may be passed as 2-D arrays.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 2:
        X, Y = X[None], Y[None]
    B, L, _ = X.shape
    T = Y.shape[1]
    if L < 1 or T < 1:
        raise ValueError("prefix and target window must be non-empty")
    p = model.params
    H = model.hidden_dim
    cache: list = []
    out = _rollout(model, X, T, cache)
    if not np.all(np.isfinite(out)):
        raise TrainingDiverged("non-finite activation in LSTM forward pass")
    resid = out - Y
    loss = float(np.mean(np.sum(resid**2, axis=-1)))
    dout = 2.0 * resid / (B * T)

    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    dx_feedback = None  # gradient w.r.t. the input of step k+1
    for k in range(L + T - 2, -1, -1):
        z, c_prev, f, i, o, g, tc, h = cache[k]
        dh = dh_next
        dx = np.zeros((B, 2))
        if k >= L - 1:
            gy = dout[:, k - L + 1].copy()
            if dx_feedback is not None:
                gy += dx_feedback
            grads["W_fc"] += gy.T @ h
            grads["b_fc"] += gy.sum(axis=0)
            dh = dh + gy @ p["W_fc"]
            if model.residual:
                dx += gy
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc**2)
        da_f = dc * c_prev * f * (1.0 - f)
        da_i = dc * g * i * (1.0 - i)
        da_o = do * o * (1.0 - o)
        da_c = dc * i * (1.0 - g**2)
        dz = np.zeros_like(z)
        for name, da in (("f", da_f), ("i", da_i), ("o", da_o), ("c", da_c)):
            grads[f"W_{name}"] += da.T @ z
            grads[f"b_{name}"] += da.sum(axis=0)
            dz += da @ p[f"W_{name}"]
        dh_next = dz[:, :H]
        dc_next = dc * f
        dx += dz[:, H:]
        dx_feedback = dx if k >= L else None
    return loss, grads


def training_windows(track_points: np.ndarray, t_pred: int, min_observed: int = MIN_OBSERVED):
    """(prefix length t, prefix, target) for t = min_observed .. n - t_pred."""
    n = len(track_points)
    for t in range(min_observed, n - t_pred + 1):
        yield t, track_points[:t], track_points[t : t + t_pred]


def window_count(n_frames: int, t_pred: int, min_observed: int = MIN_OBSERVED) -> int:
    return max(n_frames - min_observed - t_pred + 1, 0)


def _grouped_windows(tracks: Sequence[np.ndarray], t_pred: int) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    groups: dict[int, tuple[list, list]] = {}
    for pts in tracks:
        for t, x, y in training_windows(pts, t_pred):
            gx, gy = groups.setdefault(t, ([], []))
            gx.append(x)
            gy.append(y)
    return {t: (np.stack(gx), np.stack(gy)) for t, (gx, gy) in sorted(groups.items())}


@dataclass
class TrainResult:
    model: LstmModel
    loss_history: list[float]


def _points(tr) -> np.ndarray:
    return tr.points if isinstance(tr, PedestrianTrack) else np.asarray(tr, dtype=float)


def train(tracks: Iterable, config: TrainConfig) -> TrainResult:
    """Fit an LSTM on all prefix/target windows of the given tracks.

    Adam (or classical momentum) with global-norm clipping; every random
    choice is drawn from ``config.rng_seed``.
    """
    config.validate()
    pts_list = [_points(tr) for tr in tracks]
    usable = [p for p in pts_list if len(p) >= MIN_OBSERVED + config.t_pred]
    if len(usable) < 2:
        raise ValueError(
            f"need at least 2 tracks with >= {MIN_OBSERVED + config.t_pred} frames, got {len(usable)}"
        )
    init_rng = derive_rng(config.rng_seed, "lstm-init")
    model = LstmModel.init_random(config.hidden_dim, init_rng, residual=config.residual)
    model.anchored = config.anchored
    groups = _grouped_windows(usable, config.t_pred)
    if config.anchored:
        rel = np.concatenate([(gx - gx[:, -1:, :]).reshape(-1, 2) for gx, _ in groups.values()])
        model.scale = rel.std(axis=0)
    else:
        allpts = np.vstack(usable)
        model.mean = allpts.mean(axis=0)
        model.scale = allpts.std(axis=0)
    model.scale = np.where(model.scale > 1e-12, model.scale, 1.0)

    batches = []
    for t, (gx, gy) in groups.items():
        origin = model.origin(gx)
        gx, gy = model.normalize(gx, origin), model.normalize(gy, origin)
        for s in range(0, len(gx), config.batch_size):
            batches.append((gx[s : s + config.batch_size], gy[s : s + config.batch_size]))
    total = sum(len(b[0]) for b in batches)

    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    second = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    order_rng = derive_rng(config.rng_seed, "lstm-order")
    history: list[float] = []
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for b in order_rng.permutation(len(batches)):
            X, Y = batches[b]
            loss, grads = gradients_bptt(model, X, Y)
            if not math.isfinite(loss) or loss > 1e6:
                raise TrainingDiverged(f"training diverged at epoch {epoch + 1}: loss {loss:.3g}")
            epoch_loss += loss * len(X)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            clip = min(1.0, config.clip_norm / norm) if norm > 0 else 1.0
            step += 1
            for k, g in grads.items():
                g = clip * g
                if config.optimizer == "adam":
                    velocity[k] = config.momentum * velocity[k] + (1 - config.momentum) * g
                    second[k] = 0.999 * second[k] + 0.001 * g * g
                    m_hat = velocity[k] / (1 - config.momentum**step)
                    v_hat = second[k] / (1 - 0.999**step)
                    model.params[k] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
                else:
                    velocity[k] = config.momentum * velocity[k] - config.learning_rate * g
                    model.params[k] += velocity[k]
        history.append(epoch_loss / total)
        if (epoch + 1) % 50 == 0:
            log.debug("epoch %d loss %.6g", epoch + 1, history[-1])
    return TrainResult(model, history)


def constant_velocity_predict(prefix: np.ndarray, t_pred: int) -> np.ndarray:
    """Extrapolate the last finite-difference step ``t_pred`` times."""
    prefix = np.asarray(prefix, dtype=float)
    step = prefix[-1] - prefix[-2] if len(prefix) > 1 else np.zeros(2)
    return prefix[-1] + step[None, :] * np.arange(1, t_pred + 1)[:, None]


def evaluate_ade(model: LstmModel, tracks: Iterable, t_pred: int) -> tuple[float, float]:
    """Mean ADE over every window of every track, for the model and the constant-velocity baseline."""
    lstm_err, cv_err = [], []
    for pts in (_points(tr) for tr in tracks):
        for t, x, y in training_windows(pts, t_pred):
            lstm_err.append(ade(sequence_forward(model, x, t_pred), y))
            cv_err.append(ade(constant_velocity_predict(x, t_pred), y))
    if not lstm_err:
        raise ValueError("no evaluation windows: tracks too short")
    return float(np.mean(lstm_err)), float(np.mean(cv_err))


def window_ades(model: LstmModel, tracks: Iterable, t_pred: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-window ADE for the model and the baseline, batched by prefix length."""
    groups = _grouped_windows([_points(tr) for tr in tracks], t_pred)
    lstm_err, cv_err = [], []
    for t, (gx, gy) in groups.items():
        pred = predict_batch(model, gx, t_pred)
        lstm_err.append(np.linalg.norm(pred - gy, axis=-1).mean(axis=1))
        step = gx[:, -1] - gx[:, -2]
        cv = gx[:, -1][:, None, :] + step[:, None, :] * np.arange(1, t_pred + 1)[None, :, None]
        cv_err.append(np.linalg.norm(cv - gy, axis=-1).mean(axis=1))
    return np.concatenate(lstm_err), np.concatenate(cv_err)


def kfold_split(n: int, k: int = 5, repeats: int = 1, seed: int = 0) -> list[list[np.ndarray]]:
    """Per repeat, ``k`` disjoint index arrays covering range(n); sizes differ by at most 1."""
    if n < k:
        raise ValueError(f"cannot split {n} items into {k} folds")
    out = []
    for r in range(repeats):
        perm = derive_rng(seed, "kfold", r).permutation(n)
        out.append([np.sort(f) for f in np.array_split(perm, k)])
    return out


def sweep_prediction_window(
    tracks: Sequence,
    t_values: Iterable[int],
    config: TrainConfig,
    k: int = 5,
    repeats: int = 1,
) -> list[tuple[int, float, float]]:
    """Cross-validated (t_pred, mean LSTM ADE, mean constant-velocity ADE) rows."""
    tracks = list(tracks)
    t_values = list(t_values)
    longest = max(t_values)
    short = [i for i, tr in enumerate(tracks) if len(_points(tr)) < MIN_OBSERVED + longest]
    if short:
        raise ValueError(f"{len(short)} tracks too short for t_pred={longest}")
    folds = kfold_split(len(tracks), k, repeats, config.rng_seed)
    rows = []
    for t_pred in t_values:
        lstm_all, cv_all = [], []
        for r, rep in enumerate(folds):
            for f, test_idx in enumerate(rep):
                test_set = set(test_idx.tolist())
                train_tr = [tr for i, tr in enumerate(tracks) if i not in test_set]
                test_tr = [tracks[i] for i in test_idx]
                cfg = _replace(config, t_pred=t_pred, rng_seed=config.rng_seed + 1000 * r + f)
                res = train(train_tr, cfg)
                le, ce = window_ades(res.model, test_tr, t_pred)
                lstm_all.append(le)
                cv_all.append(ce)
        rows.append((t_pred, float(np.mean(np.concatenate(lstm_all))), float(np.mean(np.concatenate(cv_all)))))
    return rows


def _replace(cfg: TrainConfig, **kw) -> TrainConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


def model_to_dict(model: LstmModel) -> dict:
    return {
        "hidden_dim": model.hidden_dim,
        "input_dim": 2,
        "residual": model.residual,
        "anchored": model.anchored,
        "mean": model.mean.tolist(),
        "scale": model.scale.tolist(),
        "params": {k: {"shape": list(model.params[k].shape), "data": model.params[k].ravel().tolist()} for k in PARAM_NAMES},
    }


def model_from_dict(d: dict) -> LstmModel:
    params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
    missing = set(PARAM_NAMES) - set(params)
    if missing:
        raise ValueError(f"LSTM model missing parameters: {sorted(missing)}")
    return LstmModel(
        params, np.asarray(d["mean"]), np.asarray(d["scale"]),
        bool(d.get("residual", False)), bool(d.get("anchored", False)),
    )
