"""Ego-frame trajectories, LOWESS smoothing and per-frame feature states.

Coordinates are in the ego body frame: x forward along the ego heading,
y positive to the left. A feature state is the row (px, py, vx, vy, ttc).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

FEATURE_COLUMNS = ("px", "py", "vx", "vy", "ttc")
SENSED_RANGE_M = 200.0
DEFAULT_T_MAX = 10.0
EPS_TTC = 1e-3
EPS_CLOSING = 1e-9


class FeatureState(NamedTuple):
    px: float
    py: float
    vx: float
    vy: float
    ttc: float


class FeatureVariant(str, enum.Enum):
    LOCATION_ONLY = "location"
    VELOCITY_ONLY = "velocity"
    TTC_ONLY = "ttc"
    ALL = "all"

    @property
    def columns(self) -> tuple[int, ...]:
        return _VARIANT_COLUMNS[self]

    @property
    def dim(self) -> int:
        return len(self.columns)

    @classmethod
    def parse(cls, text: str) -> "FeatureVariant":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValueError(
                f"unknown feature variant {text!r}; expected one of "
                + ", ".join(v.value for v in cls)
            ) from None


_VARIANT_COLUMNS = {
    FeatureVariant.LOCATION_ONLY: (0, 1),
    FeatureVariant.VELOCITY_ONLY: (2, 3),
    FeatureVariant.TTC_ONLY: (4,),
    FeatureVariant.ALL: (0, 1, 2, 3, 4),
}


@dataclass(frozen=True)
class PedestrianTrack:
    """Ego-frame positions of one pedestrian sampled at a uniform rate.

    ``points[k]`` is the position at time ``k / frame_rate``.
    """

    id: str
    frame_rate: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"track {self.id}: points must have shape (n, 2), got {pts.shape}")
        if not self.frame_rate > 0:
            raise ValueError(f"track {self.id}: frame_rate must be positive")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"track {self.id}: non-finite coordinate")
        if np.any(np.abs(pts) > SENSED_RANGE_M):
            raise ValueError(f"track {self.id}: coordinate beyond {SENSED_RANGE_M} m sensed range")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    def with_points(self, points: np.ndarray) -> "PedestrianTrack":
        return PedestrianTrack(self.id, self.frame_rate, points)


@dataclass
class FeatureDataset:
    """Feature-state rows grouped per track, in track order."""

    track_ids: list[str] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.track_ids) != len(self.states):
            raise ValueError("track_ids and states differ in length")

    @property
    def n(self) -> int:
        return len(self.track_ids)

    @property
    def lengths(self) -> list[int]:
        return [len(s) for s in self.states]

    def stacked(self) -> np.ndarray:
        if not self.states:
            return np.zeros((0, 5))
        return np.vstack(self.states)

    def row_index(self) -> list[tuple[str, int]]:
        """(track id, frame) for every stacked row."""
        return [(tid, k) for tid, s in zip(self.track_ids, self.states) for k in range(len(s))]

    def append(self, track_id: str, states: np.ndarray) -> None:
        self.track_ids.append(track_id)
        self.states.append(np.asarray(states, dtype=float))


def _tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**3) ** 3


def _bisquare(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**2) ** 2


def _local_linear(t, y, q, robust):
    n = len(t)
    fitted = np.empty(n)
    for i in range(n):
        # q nearest samples on a uniform grid: contiguous window, ties go left
        lo = min(max(i - q // 2, 0), n - q)
        hi = lo + q
        tw = t[lo:hi]
        dmax = np.max(np.abs(tw - t[i]))
        w = _tricube((tw - t[i]) / dmax) if dmax > 0 else np.ones(q)
        w = w * robust[lo:hi]
        yw = y[lo:hi]
        sw = w.sum()
        if np.count_nonzero(w > 0) < 2 or sw <= 0:
            fitted[i] = y[i] if sw <= 0 else np.dot(w, yw) / sw
            continue
        tbar = np.dot(w, tw) / sw
        ybar = np.dot(w, yw) / sw
        stt = np.dot(w, (tw - tbar) ** 2)
        if stt <= 0:
            fitted[i] = ybar
            continue
        slope = np.dot(w, (tw - tbar) * (yw - ybar)) / stt
        fitted[i] = ybar + slope * (t[i] - tbar)
    return fitted


def lowess_1d(y: np.ndarray, span: float = 0.3, iterations: int = 1) -> np.ndarray:
    """Robust local-linear LOWESS of ``y`` against its sample index.

    ``iterations`` counts the bisquare robustness passes after the initial fit.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    q = int(span * n + 1e-10)
    t = np.arange(n, dtype=float)
    robust = np.ones(n)
    fitted = _local_linear(t, y, q, robust)
    for _ in range(iterations):
        resid = y - fitted
        s = np.median(np.abs(resid))
        scale = max(np.max(np.abs(y)), 1.0)
        if s <= 1e-12 * scale:
            break
        robust = _bisquare(resid / (6.0 * s))
        fitted = _local_linear(t, y, q, robust)
    return fitted


def lowess_smooth(track: PedestrianTrack, span: float = 0.3, iterations: int = 1) -> PedestrianTrack:
    """Smooth x and y of a track independently with LOWESS over time."""
    n = len(track)
    if not 0 < span <= 1:
        raise ValueError(f"span must lie in (0, 1], got {span}")
    if n < 3:
        raise ValueError(f"track {track.id}: LOWESS needs at least 3 points, got {n}")
    if span * n + 1e-10 < 2:
        raise ValueError(f"track {track.id}: span {span} covers fewer than 2 of {n} points")
    pts = track.points
    smoothed = np.column_stack([lowess_1d(pts[:, 0], span, iterations), lowess_1d(pts[:, 1], span, iterations)])
    return track.with_points(smoothed)


def compute_velocity(track: PedestrianTrack) -> np.ndarray:
    """Finite-difference relative velocity, (0, 0) at the first frame."""
    pts = track.points
    vel = np.zeros_like(pts)
    if len(pts) > 1:
        vel[1:] = (pts[1:] - pts[:-1]) * track.frame_rate
    return vel


def compute_ttc(p: Sequence[float], v: Sequence[float], t_max: float = DEFAULT_T_MAX) -> float:
    """Time to collision under constant relative velocity, capped at ``t_max``.

    Closing speed is the negated projection of ``v`` on the unit vector
    towards the pedestrian. Receding or tangential motion returns ``t_max``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    px, py = float(p[0]), float(p[1])
    dist = math.hypot(px, py)
    if dist == 0.0:
        return EPS_TTC
    closing = -(float(v[0]) * px + float(v[1]) * py) / dist
    if closing <= 0.0:
        return t_max
    return min(dist / max(closing, EPS_CLOSING), t_max)


def ttc_array(p: np.ndarray, v: np.ndarray, t_max: float = DEFAULT_T_MAX) -> np.ndarray:
    """Vectorized ``compute_ttc`` over rows of ``p`` and ``v``."""
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    dist = np.hypot(p[:, 0], p[:, 1])
    out = np.full(len(p), float(t_max))
    nz = dist > 0
    closing = np.zeros(len(p))
    closing[nz] = -(v[nz, 0] * p[nz, 0] + v[nz, 1] * p[nz, 1]) / dist[nz]
    moving = nz & (closing > 0)
    out[moving] = np.minimum(dist[moving] / np.maximum(closing[moving], EPS_CLOSING), t_max)
    out[~nz] = EPS_TTC
    return out


def build_feature_states(track: PedestrianTrack, t_max: float = DEFAULT_T_MAX) -> np.ndarray:
    """Per-frame (px, py, vx, vy, ttc) rows for a (smoothed) track."""
    if len(track) < 2:
        raise ValueError(f"track {track.id}: need at least 2 points for features")
    vel = compute_velocity(track)
    ttc = ttc_array(track.points, vel, t_max)
    return np.column_stack([track.points, vel, ttc])


def select_features(states, variant: FeatureVariant) -> np.ndarray:
    """Columns of a state (or state matrix) used by ``variant``."""
    arr = np.asarray(states, dtype=float)
    return arr[..., list(FeatureVariant(variant).columns)]


def dataset_from_tracks(tracks: Sequence[PedestrianTrack], t_max: float = DEFAULT_T_MAX) -> FeatureDataset:
    ds = FeatureDataset()
    for tr in tracks:
        ds.append(tr.id, build_feature_states(tr, t_max))
    return ds
