"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment. Unknown keys and values that
do not parse as the field's type are rejected with the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .clustering import KernelSpec
from .features import FeatureVariant
from .lstm import TrainConfig
from .sim import DatasetConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    # data
    frame_rate: float = 6.5
    duration: float = 4.0
    noise_sigma: float = 0.05
    train_count: int = 8
    test_count: int = 4
    lowess_span: float = 0.3
    t_max: float = 10.0
    # trajectory predictor
    t_pred: int = 5
    hidden_dim: int = 32
    learning_rate: float = 0.003
    momentum: float = 0.9
    optimizer: str = "adam"
    epochs: int = 300
    batch_size: int = 64
    clip_norm: float = 5.0
    sweep_windows: str = "1,5"
    sweep_folds: int = 5
    sweep_repeats: int = 1
    # clustering
    k: int = 4
    k_min: int = 2
    k_max: int = 8
    cluster_method: str = "kpca-kmc"
    cluster_kernel: str = "gaussian"
    cluster_restarts: int = 10
    kpca_mass: float = 0.95
    knn: int = 10
    # classifier
    svm_kernel: str = "gaussian"
    svm_c: float = 10.0
    svm_tol: float = 1e-3
    cv_folds: int = 5
    variant: str = "all"
    # outputs
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        positive = ("frame_rate", "duration", "train_count", "test_count", "t_max", "t_pred", "hidden_dim",
                    "learning_rate", "epochs", "batch_size", "clip_norm", "sweep_folds", "sweep_repeats",
                    "cluster_restarts", "knn", "svm_c", "svm_tol", "cv_folds", "jobs")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if not 0 < self.lowess_span <= 1:
            raise ConfigError("lowess_span must lie in (0, 1]")
        if not 0 < self.kpca_mass <= 1:
            raise ConfigError("kpca_mass must lie in (0, 1]")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError("need 2 <= k_min <= k_max")
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.cluster_method not in ("kpca-kmc", "spectral"):
            raise ConfigError(f"unknown cluster_method {self.cluster_method!r}")
        if self.optimizer not in ("adam", "momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        try:
            self.windows()
            KernelSpec.parse(self.cluster_kernel)
            KernelSpec.parse(self.svm_kernel)
            FeatureVariant.parse(self.variant)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return self

    def windows(self) -> list[int]:
        try:
            vals = [int(v) for v in self.sweep_windows.split(",") if v.strip()]
        except ValueError:
            raise ValueError(f"sweep_windows must be comma-separated integers, got {self.sweep_windows!r}") from None
        if not vals or min(vals) < 1:
            raise ValueError("sweep_windows needs positive integers")
        return vals

    def dataset(self, count: int | None = None, seed: int | None = None) -> DatasetConfig:
        return DatasetConfig(
            count=self.train_count if count is None else count,
            noise_sigma=self.noise_sigma, frame_rate=self.frame_rate,
            duration=self.duration, seed=self.seed if seed is None else seed,
        )

    def train_config(self, **kw) -> TrainConfig:
        cfg = TrainConfig(
            hidden_dim=self.hidden_dim, learning_rate=self.learning_rate, momentum=self.momentum,
            epochs=self.epochs, batch_size=self.batch_size, clip_norm=self.clip_norm,
            rng_seed=self.seed, t_pred=self.t_pred, optimizer=self.optimizer,
        )
        return replace(cfg, **kw)

    def items(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, text: str):
    kind = _TYPES[name]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of typed overrides."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        try:
            out[key] = _coerce(key, val)
        except ValueError:
            raise ConfigError(f"{source}:{n}: {key} expects {_TYPES[key]}, got {val!r}") from None
    return out


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults, then the file, then non-None keyword overrides."""
    values = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"{p}: cannot read config ({e.strerror})") from None
        values.update(parse_config(text, str(p)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values).validate()
