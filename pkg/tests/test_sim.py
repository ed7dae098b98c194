import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prlp.features import build_feature_states, lowess_smooth
from prlp.sim import (
    Behavior,
    DatasetConfig,
    EgoPose,
    Regime,
    Scenario,
    ScenarioConfig,
    ego_path,
    feature_quartiles,
    from_ego_frame,
    generate_dataset,
    generate_encounters,
    normalize_angle,
    planted_states,
    simulate_encounter,
    to_ego_frame,
)


class TestEgoFrame:
    def test_identity_pose(self):
        np.testing.assert_allclose(to_ego_frame(EgoPose(0, 0, 0), (3, 4)), [3, 4])

    def test_quarter_turn(self):
        np.testing.assert_allclose(to_ego_frame(EgoPose(0, 0, math.pi / 2), (0, 5)), [5, 0], atol=1e-12)

    def test_coincident(self):
        np.testing.assert_allclose(to_ego_frame(EgoPose(1, 1, 0), (1, 1)), [0, 0])

    @given(
        st.floats(-100, 100), st.floats(-100, 100), st.floats(-10, 10),
        st.floats(-100, 100), st.floats(-100, 100),
    )
    def test_round_trip(self, x, y, h, px, py):
        pose = EgoPose(x, y, h)
        back = from_ego_frame(pose, to_ego_frame(pose, (px, py)))
        np.testing.assert_allclose(back, [px, py], atol=1e-9)

    @given(st.floats(-50, 50))
    def test_heading_normalized(self, a):
        h = normalize_angle(a)
        assert -math.pi < h <= math.pi
        assert math.cos(h) == pytest.approx(math.cos(a), abs=1e-9)
        assert math.sin(h) == pytest.approx(math.sin(a), abs=1e-9)

    def test_pi_maps_to_pi(self):
        assert EgoPose(0, 0, -math.pi).heading == pytest.approx(math.pi)

    def test_negative_speed(self):
        with pytest.raises(ValueError):
            EgoPose(0, 0, 0, speed=-1)


class TestEgoPath:
    def test_turn_is_quarter_circle(self):
        cfg = ScenarioConfig(scenario=Scenario.TURNING_RIGHT, turn_radius=10, turn_start=2)
        arc = 10 * math.pi / 2
        p = ego_path(cfg, np.array([0.0, 2.0, 2 + arc, 2 + arc + 3]))
        np.testing.assert_allclose(p[0], [0, 0, 0], atol=1e-12)
        np.testing.assert_allclose(p[2], [12, -10, -math.pi / 2], atol=1e-12)
        np.testing.assert_allclose(p[3], [12, -13, -math.pi / 2], atol=1e-12)

    def test_unit_speed_along_path(self):
        cfg = ScenarioConfig(scenario=Scenario.TURNING_RIGHT, turn_radius=8, turn_start=1)
        s = np.linspace(0, 20, 2001)
        p = ego_path(cfg, s)
        step = np.hypot(*np.diff(p[:, :2], axis=0).T)
        np.testing.assert_allclose(step, 0.01, rtol=1e-4)


class TestSimulate:
    def test_deterministic(self):
        cfg = ScenarioConfig(rng_seed=11)
        a, b = simulate_encounter(cfg), simulate_encounter(cfg)
        np.testing.assert_array_equal(a.track.points, b.track.points)

    def test_lengths_and_noise(self):
        cfg = ScenarioConfig(noise_sigma=0.05, duration=30, rng_seed=2, ped_longitudinal=150, ego_speed=1)
        e = simulate_encounter(cfg)
        n = cfg.n_frames
        assert len(e.track) == len(e.clean) == len(e.ego_world) == len(e.ped_world) == n
        resid = e.track.points - e.clean.points
        assert resid.std() == pytest.approx(0.05, rel=0.15)

    def test_drift_away_distance_grows(self):
        cfg = ScenarioConfig(behavior=Behavior.DRIFT_AWAY, ego_speed=0.3, ped_longitudinal=15,
                             ped_lateral=5, ped_heading=0.5, noise_sigma=0)
        d = np.hypot(*simulate_encounter(cfg).clean.points.T)
        half = d[len(d) // 2 :]
        assert np.all(np.diff(half) >= 0)

    def test_cross_lateral_monotone(self):
        cfg = ScenarioConfig(behavior=Behavior.CROSS, ego_speed=5, ped_longitudinal=30,
                             ped_lateral=4, ped_heading=-math.pi / 2, noise_sigma=0)
        y = simulate_encounter(cfg).clean.points[:, 1]
        assert np.all(np.diff(y) < 0)
        # in the ego frame the crossing is at constant relative velocity: y linear in time
        np.testing.assert_allclose(np.diff(y, 2), 0, atol=1e-12)

    def test_hesitation_pauses(self):
        cfg = ScenarioConfig(behavior=Behavior.CROSS_WITH_HESITATION, ego_speed=0.0,
                             hesitation=(1.0, 0.5, 1.0), noise_sigma=0)
        e = simulate_encounter(cfg)
        t = np.arange(len(e.ped_world)) / cfg.frame_rate
        pausing = (t > 1.55) & (t < 2.45)
        step = np.hypot(*np.diff(e.ped_world, axis=0).T)
        assert np.all(step[pausing[1:]] < 1e-12)

    @pytest.mark.parametrize("kw", [dict(frame_rate=0), dict(duration=0.1), dict(noise_sigma=-1), dict(ego_speed=-1)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            simulate_encounter(ScenarioConfig(**kw))

    def test_frame_spacing(self):
        e = simulate_encounter(ScenarioConfig())
        assert e.track.dt == pytest.approx(1 / 6.5)


class TestDataset:
    def test_point_count(self):
        cfg = DatasetConfig(count=2, seed=1)
        gd = generate_dataset(cfg)
        assert len(gd.encounters) == cfg.total == 16
        # 4 s at 6.5 fps rounds to 26 frames
        assert len(gd.dataset.stacked()) == 16 * 26

    def test_zero_noise_smoothing_small(self):
        gd = generate_dataset(DatasetConfig(count=2, noise_sigma=0.0, seed=4))
        affine = 0
        for e, sm in zip(gd.encounters, gd.smoothed):
            np.testing.assert_array_equal(e.track.points, e.clean.points)
            # constant relative velocity: the local-linear fit is exact
            if np.max(np.abs(np.diff(e.clean.points, 2, axis=0))) < 1e-9:
                affine += 1
                np.testing.assert_allclose(sm.points, e.clean.points, atol=1e-6)
        assert affine >= 4

    def test_zero_noise_straight_constant_velocity_exact(self):
        cfg = ScenarioConfig(behavior=Behavior.CROSS, noise_sigma=0)
        e = simulate_encounter(cfg)
        np.testing.assert_allclose(lowess_smooth(e.track).points, e.clean.points, atol=1e-6)

    def test_quartiles_match_sort_oracle(self):
        gd = generate_dataset(DatasetConfig(count=1, seed=9))
        S = gd.dataset.stacked()
        q = feature_quartiles(S)
        for j, name in enumerate(("px", "py", "vx", "vy", "ttc")):
            col = np.sort(S[:, j])
            for frac, got in zip((0.25, 0.5, 0.75), q[name]):
                pos = frac * (len(col) - 1)
                lo = int(math.floor(pos))
                hi = min(lo + 1, len(col) - 1)
                expect = col[lo] + (pos - lo) * (col[hi] - col[lo])
                assert got == pytest.approx(expect, abs=1e-12)

    def test_generation_deterministic_and_seed_sensitive(self):
        a = generate_encounters(DatasetConfig(count=1, seed=5))
        b = generate_encounters(DatasetConfig(count=1, seed=5))
        c = generate_encounters(DatasetConfig(count=1, seed=6))
        assert all(np.array_equal(x.track.points, y.track.points) for x, y in zip(a, b))
        assert not np.array_equal(a[0].track.points, c[0].track.points)

    def test_behavior_ttc_ordering(self):
        gd = generate_dataset(DatasetConfig(count=13, seed=21))  # 104 encounters
        med = {}
        for b in Behavior:
            rows = [s for e, s in zip(gd.encounters, gd.dataset.states) if e.behavior is b]
            med[b] = np.median(np.vstack(rows)[:, 4])
        fast = max(med[Behavior.CROSS], med[Behavior.APPROACH_FROM_RIGHT])
        assert fast < med[Behavior.CROSS_WITH_HESITATION] < med[Behavior.DRIFT_AWAY]

    def test_bad_count(self):
        with pytest.raises(ValueError):
            generate_encounters(DatasetConfig(count=0))


class TestPlanted:
    def test_shapes_and_ttc(self):
        S, lab = planted_states(50, seed=3)
        assert S.shape == (200, 5)
        assert np.bincount(lab).tolist() == [50] * 4
        fast_near = S[lab == list(Regime).index(Regime.FAST_NEAR)]
        assert np.median(fast_near[:, 4]) < 3
        slow_far = S[lab == list(Regime).index(Regime.SLOW_FAR)]
        assert np.all(slow_far[:, 4] == 10.0)
