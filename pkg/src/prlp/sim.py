"""Synthetic vehicle-perspective pedestrian encounters.

The ego vehicle either drives straight or makes a right turn (straight
lead-in, constant-radius quarter circle, straight exit). Each pedestrian
behaviour is shaped to produce one of four interaction regimes, so the
feature states carry recoverable risk structure:

* ``cross``: crosses close in front of an approaching ego (short distance, low TTC)
* ``approach_right``: walks in from the right, far ahead of a fast ego (low TTC)
* ``cross_hesitate``: crosses near a creeping ego, pausing midway (high TTC)
* ``drift_away``: walks away from an almost stationary ego (far, TTC at cap)

World frame = ego pose at time zero (x forward, y left).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .features import (
    DEFAULT_T_MAX,
    FeatureDataset,
    PedestrianTrack,
    build_feature_states,
    lowess_smooth,
)
from .rng import derive_rng, derive_seed


class Scenario(str, enum.Enum):
    GOING_STRAIGHT = "straight"
    TURNING_RIGHT = "turn_right"


class Behavior(str, enum.Enum):
    CROSS = "cross"
    CROSS_WITH_HESITATION = "cross_hesitate"
    DRIFT_AWAY = "drift_away"
    APPROACH_FROM_RIGHT = "approach_right"


@dataclass(frozen=True)
class EgoPose:
    x_w: float
    y_w: float
    heading: float
    speed: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "heading", normalize_angle(self.heading))
        if self.speed < 0:
            raise ValueError("ego speed must be non-negative")


def normalize_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    elif a > math.pi:
        a -= 2 * math.pi
    return a


def to_ego_frame(pose: EgoPose, world_point) -> np.ndarray:
    """World point expressed in the ego body frame (x forward, y left)."""
    dx = world_point[0] - pose.x_w
    dy = world_point[1] - pose.y_w
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    return np.array([c * dx + s * dy, -s * dx + c * dy])


def from_ego_frame(pose: EgoPose, ego_point) -> np.ndarray:
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    x, y = ego_point[0], ego_point[1]
    return np.array([pose.x_w + c * x - s * y, pose.y_w + s * x + c * y])


def _to_ego_frame_many(ego: np.ndarray, world: np.ndarray) -> np.ndarray:
    d = world - ego[:, :2]
    c, s = np.cos(ego[:, 2]), np.sin(ego[:, 2])
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])


@dataclass(frozen=True)
class ScenarioConfig:
    """One fully specified encounter.

    Lengths are metres, speeds m/s, times seconds. ``ego_profile`` is a
    sequence of (duration, acceleration) segments applied from time zero;
    the last segment's acceleration is held afterwards and speed never goes
    below zero. The pedestrian starts ``ped_lateral`` to the left (negative:
    right) of the ego path at arc length ``ped_longitudinal``.
    """

    scenario: Scenario = Scenario.GOING_STRAIGHT
    behavior: Behavior = Behavior.CROSS
    ego_speed: float = 5.0
    ego_profile: tuple[tuple[float, float], ...] = ()
    turn_radius: float = 12.0
    turn_start: float = 0.0
    ped_speed: float = 1.3
    ped_longitudinal: float = 25.0
    ped_lateral: float = 4.0
    ped_heading: float = -math.pi / 2
    hesitation: tuple[float, float, float] = (1.0, 0.6, 0.8)
    noise_sigma: float = 0.05
    frame_rate: float = 6.5
    duration: float = 4.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "behavior", Behavior(self.behavior))

    def validate(self) -> None:
        if not self.frame_rate > 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        if self.duration * self.frame_rate < 2:
            raise ValueError("duration * frame_rate must cover at least 2 frames")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if self.ego_speed < 0 or self.ped_speed < 0:
            raise ValueError("speeds must be non-negative")
        if self.scenario is Scenario.TURNING_RIGHT and not self.turn_radius > 0:
            raise ValueError("turn_radius must be positive")
        for dur, _ in self.ego_profile:
            if dur < 0:
                raise ValueError("ego profile segment durations must be non-negative")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))


@dataclass
class LabeledEncounter:
    track: PedestrianTrack
    clean: PedestrianTrack
    ego_world: np.ndarray  # (n, 3): x_w, y_w, heading
    ped_world: np.ndarray  # (n, 2)
    behavior: Behavior
    scenario: Scenario


def _speed_knots(v0: float, segments) -> tuple[list[float], list[float]]:
    """Knots of a piecewise-linear, non-negative speed profile."""
    ts, vs = [0.0], [max(v0, 0.0)]
    t, v = 0.0, max(v0, 0.0)
    for dur, acc in segments:
        v_end = v + acc * dur
        if v_end < 0.0 and acc < 0.0:
            t_zero = t + v / -acc
            ts.append(t_zero)
            vs.append(0.0)
            v_end = 0.0
        t += dur
        v = v_end
        ts.append(t)
        vs.append(v)
    return ts, vs


def _distance(ts: Sequence[float], vs: Sequence[float], t: np.ndarray) -> np.ndarray:
    """Integral of the piecewise-linear speed through the knots, held after the last."""
    ts = np.asarray(ts, dtype=float)
    vs = np.asarray(vs, dtype=float)
    t = np.asarray(t, dtype=float)
    seg = np.concatenate([[0.0], np.cumsum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts))])
    out = np.empty_like(t)
    for j, tj in enumerate(t):
        k = int(np.searchsorted(ts, tj, side="right")) - 1
        if k >= len(ts) - 1:
            out[j] = seg[-1] + vs[-1] * (tj - ts[-1])
            continue
        k = max(k, 0)
        dt = tj - ts[k]
        slope = (vs[k + 1] - vs[k]) / (ts[k + 1] - ts[k]) if ts[k + 1] > ts[k] else 0.0
        out[j] = seg[k] + vs[k] * dt + 0.5 * slope * dt * dt
    return out


def ego_path(config: ScenarioConfig, s: np.ndarray) -> np.ndarray:
    """Ego (x_w, y_w, heading) at arc lengths ``s``."""
    s = np.asarray(s, dtype=float)
    if config.scenario is Scenario.GOING_STRAIGHT:
        return np.column_stack([s, np.zeros_like(s), np.zeros_like(s)])
    # straight lead-in, quarter-circle right turn, straight exit
    r = config.turn_radius
    s0 = config.turn_start
    arc = r * math.pi / 2
    u = np.clip(s - s0, 0.0, arc)
    ang = u / r
    x = np.minimum(s, s0) + r * np.sin(ang)
    y = -r * (1.0 - np.cos(ang)) - np.maximum(s - s0 - arc, 0.0)
    return np.column_stack([x, y, -ang])


def _ego_states(config: ScenarioConfig, times: np.ndarray) -> np.ndarray:
    ts, vs = _speed_knots(config.ego_speed, config.ego_profile)
    s = _distance(ts, vs, times)
    return ego_path(config, s)


def _ped_distance(config: ScenarioConfig, times: np.ndarray) -> np.ndarray:
    w = config.ped_speed
    if config.behavior is Behavior.CROSS_WITH_HESITATION:
        t_stop, ramp, pause = config.hesitation
        ts = [0.0, t_stop, t_stop + ramp, t_stop + ramp + pause, t_stop + 2 * ramp + pause]
        vs = [w, w, 0.0, 0.0, w]
        return _distance(ts, vs, times)
    return w * times


def _ped_world(config: ScenarioConfig, times: np.ndarray) -> np.ndarray:
    if config.behavior is Behavior.DRIFT_AWAY:
        anchor = np.array([config.ped_longitudinal, 0.0, 0.0])
    else:
        anchor = ego_path(config, np.array([config.ped_longitudinal]))[0]
    h = anchor[2]
    tangent = np.array([math.cos(h), math.sin(h)])
    normal = np.array([-math.sin(h), math.cos(h)])
    start = anchor[:2] + config.ped_lateral * normal
    # heading measured in the path frame at the anchor point
    direction = math.cos(config.ped_heading) * tangent + math.sin(config.ped_heading) * normal
    dist = _ped_distance(config, times)
    return start[None, :] + dist[:, None] * direction[None, :]


def simulate_encounter(config: ScenarioConfig, track_id: str = "0") -> LabeledEncounter:
    """Simulate one encounter; the noise stream is seeded by ``config.rng_seed``."""
    config.validate()
    n = config.n_frames
    times = np.arange(n) / config.frame_rate
    ego = _ego_states(config, times)
    ped = _ped_world(config, times)
    clean_pts = _to_ego_frame_many(ego, ped)
    rng = np.random.default_rng(config.rng_seed)
    noisy_pts = clean_pts + rng.normal(0.0, config.noise_sigma, size=clean_pts.shape) if config.noise_sigma > 0 else clean_pts.copy()
    return LabeledEncounter(
        track=PedestrianTrack(track_id, config.frame_rate, noisy_pts),
        clean=PedestrianTrack(track_id, config.frame_rate, clean_pts),
        ego_world=ego,
        ped_world=ped,
        behavior=config.behavior,
        scenario=config.scenario,
    )


@dataclass(frozen=True)
class DatasetConfig:
    """Randomized encounter mix: ``count`` encounters per (behavior, scenario) pair."""

    behaviors: tuple[Behavior, ...] = tuple(Behavior)
    scenarios: tuple[Scenario, ...] = tuple(Scenario)
    count: int = 8
    noise_sigma: float = 0.05
    frame_rate: float = 6.5
    duration: float = 4.0
    seed: int = 0

    @property
    def total(self) -> int:
        return len(self.behaviors) * len(self.scenarios) * self.count


def _u(rng, lo, hi):
    return float(rng.uniform(lo, hi))


def sample_config(behavior: Behavior, scenario: Scenario, rng: np.random.Generator, base: DatasetConfig) -> ScenarioConfig:
    """Draw randomized parameters for one encounter of the given archetype."""
    turning = scenario is Scenario.TURNING_RIGHT
    radius = _u(rng, 10.0, 15.0)
    turn_start = _u(rng, 0.0, 6.0)
    dur = base.duration
    if behavior is Behavior.CROSS:
        v0 = _u(rng, 3.0, 4.0) if turning else _u(rng, 4.0, 6.0)
        acc = _u(rng, -0.8, -0.2)
        profile = ((dur / 2, 0.0), (dur, acc))
        travel = float(_distance(*_speed_knots(v0, profile), np.array([dur]))[0])
        cfg = dict(
            ego_speed=v0, ego_profile=profile,
            ped_longitudinal=travel + _u(rng, 3.0, 8.0),
            ped_lateral=_u(rng, 3.0, 6.0), ped_heading=-math.pi / 2 + _u(rng, -0.3, 0.3),
            ped_speed=_u(rng, 1.0, 1.6),
        )
    elif behavior is Behavior.APPROACH_FROM_RIGHT:
        v0 = _u(rng, 3.0, 4.0) if turning else _u(rng, 8.0, 10.0)
        profile = ((dur, _u(rng, -0.3, 0.3)),)
        travel = float(_distance(*_speed_knots(v0, profile), np.array([dur]))[0])
        gap = _u(rng, 5.0, 10.0) if turning else _u(rng, 12.0, 20.0)
        cfg = dict(
            ego_speed=v0, ego_profile=profile,
            ped_longitudinal=travel + gap,
            ped_lateral=-_u(rng, 3.0, 7.0), ped_heading=math.pi / 2 + _u(rng, -0.3, 0.3),
            ped_speed=_u(rng, 1.0, 1.6),
        )
    elif behavior is Behavior.CROSS_WITH_HESITATION:
        v0 = _u(rng, 0.8, 1.5)
        profile = ((dur, _u(rng, -0.15, 0.0)),)
        travel = float(_distance(*_speed_knots(v0, profile), np.array([dur]))[0])
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        cfg = dict(
            ego_speed=v0, ego_profile=profile,
            ped_longitudinal=travel + _u(rng, 4.0, 8.0),
            ped_lateral=side * _u(rng, 2.0, 4.0),
            ped_heading=-side * math.pi / 2 + _u(rng, -0.2, 0.2),
            ped_speed=_u(rng, 1.0, 1.5),
            hesitation=(_u(rng, 0.6, 1.6), _u(rng, 0.4, 0.8), _u(rng, 0.5, 1.2)),
        )
    else:
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        cfg = dict(
            ego_speed=_u(rng, 0.0, 0.6), ego_profile=(),
            ped_longitudinal=_u(rng, 14.0, 24.0),
            ped_lateral=side * _u(rng, 3.0, 9.0),
            ped_heading=side * _u(rng, 0.2, 0.9),
            ped_speed=_u(rng, 1.2, 1.8),
        )
    return ScenarioConfig(
        scenario=scenario, behavior=behavior, turn_radius=radius, turn_start=turn_start,
        noise_sigma=base.noise_sigma, frame_rate=base.frame_rate, duration=dur,
        rng_seed=int(rng.integers(0, 2**31 - 1)), **cfg,
    )


def generate_encounters(config: DatasetConfig, tag: str = "encounter") -> list[LabeledEncounter]:
    """Encounters in (behavior, scenario, replicate) order, each with its own derived stream."""
    if config.count < 1:
        raise ValueError("count per configuration must be at least 1")
    out = []
    idx = 0
    for behavior in config.behaviors:
        for scenario in config.scenarios:
            for _ in range(config.count):
                rng = derive_rng(config.seed, tag, idx)
                sc = sample_config(Behavior(behavior), Scenario(scenario), rng, config)
                out.append(simulate_encounter(sc, track_id=f"{tag}{idx:04d}"))
                idx += 1
    return out


def feature_quartiles(states: np.ndarray) -> dict[str, tuple[float, float, float]]:
    """25th/50th/75th percentiles of each feature column (linear interpolation)."""
    from .features import FEATURE_COLUMNS

    q = np.percentile(states, [25, 50, 75], axis=0)
    return {name: tuple(float(v) for v in q[:, j]) for j, name in enumerate(FEATURE_COLUMNS)}


@dataclass
class GeneratedData:
    encounters: list[LabeledEncounter]
    smoothed: list[PedestrianTrack]
    dataset: FeatureDataset
    summary: dict[str, tuple[float, float, float]] = field(default_factory=dict)

    @property
    def behaviors(self) -> list[Behavior]:
        return [e.behavior for e in self.encounters]


def generate_dataset(
    config: DatasetConfig,
    span: float = 0.3,
    t_max: float = DEFAULT_T_MAX,
    tag: str = "encounter",
) -> GeneratedData:
    """Simulate, LOWESS-smooth and featurize an encounter set."""
    encounters = generate_encounters(config, tag)
    smoothed = [lowess_smooth(e.track, span) for e in encounters]
    ds = FeatureDataset()
    for tr in smoothed:
        ds.append(tr.id, build_feature_states(tr, t_max))
    return GeneratedData(encounters, smoothed, ds, feature_quartiles(ds.stacked()))


class Regime(str, enum.Enum):
    SLOW_FAR = "slow_far"
    SLOW_NEAR = "slow_near"
    FAST_NEAR = "fast_near"
    FAST_FAR = "fast_far"


# (px, py, vx, vy) centres and spreads for directly sampled states
_REGIME_PARAMS = {
    Regime.SLOW_FAR: ((26.0, 6.0, 1.0, 0.6), (1.5, 1.2, 0.2, 0.2)),
    Regime.SLOW_NEAR: ((6.0, 0.0, -1.0, 0.0), (0.6, 0.9, 0.2, 0.3)),
    Regime.FAST_NEAR: ((8.0, 2.0, -5.0, -1.2), (0.7, 0.6, 0.3, 0.2)),
    Regime.FAST_FAR: ((25.0, -4.0, -9.0, 1.2), (1.5, 0.6, 0.4, 0.2)),
}


def planted_states(n_per_regime: int, seed: int, t_max: float = DEFAULT_T_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Feature states drawn around four regime centres; TTC is computed from p and v.

    Returns (states, regime index) with regimes in ``Regime`` order.
    """
    from .features import ttc_array

    rows, labels = [], []
    for r_idx, regime in enumerate(Regime):
        mu, sd = _REGIME_PARAMS[regime]
        rng = derive_rng(seed, f"planted:{regime.value}")
        pv = rng.normal(mu, sd, size=(n_per_regime, 4))
        ttc = ttc_array(pv[:, :2], pv[:, 2:], t_max)
        rows.append(np.column_stack([pv, ttc]))
        labels.append(np.full(n_per_regime, r_idx))
    return np.vstack(rows), np.concatenate(labels)


def derive_dataset_config(base: DatasetConfig, tag: str, count: int | None = None) -> DatasetConfig:
    return replace(base, seed=derive_seed(base.seed, tag), count=base.count if count is None else count)
