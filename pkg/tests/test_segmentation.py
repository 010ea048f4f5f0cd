import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skidsteer.dataset import SyncedTrajectory
from skidsteer.geometry import InvalidInputError
from skidsteer.segmentation import HorizonConfig, count, segment


def straight(duration=10.0, rate=20.0, speed=1.0, wheel=1.0):
    n = int(round(duration * rate)) + 1
    t = np.arange(n) / rate
    return SyncedTrajectory.from_arrays(t, np.full(n, wheel), np.full(n, wheel),
                                        speed * t, np.zeros(n), np.zeros(n))


def brute_force_sliding(s, h):
    """Reference scan: every start with some later sample at least h further on."""
    out = []
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[j] - s[i] >= h - 1e-9:
                out.append((i, j))
                break
    return out


class TestSpatial:
    def test_ten_meters_in_two_meter_pieces(self):
        segs = segment(straight(), HorizonConfig("spatial", 2.0))
        assert count(segs) == 5
        for k, s in enumerate(segs):
            assert s.path_length == pytest.approx(2.0)
            assert s.start_pose.x == pytest.approx(2.0 * k)

    def test_sliding_count_matches_scan(self):
        traj = straight()
        segs = segment(traj, HorizonConfig("spatial", 2.0, "sliding"))
        ref = brute_force_sliding(traj.s, 2.0)
        assert [(g.start_index, g.start_index + len(g.t) - 1) for g in segs] == ref
        assert count(segs) == 161

    def test_horizon_longer_than_trajectory(self, caplog):
        with caplog.at_level("WARNING"):
            assert segment(straight(), HorizonConfig("spatial", 50.0)) == []
        assert "exceeds" in caplog.text

    def test_zero_commands_removed(self):
        # ground truth drifts (e.g. sliding on a slope) while the wheels are idle
        segs = segment(straight(wheel=0.0), HorizonConfig("spatial", 2.0))
        assert count(segs) == 0

    def test_partially_idle_kept(self):
        traj = straight()
        wl = traj.omega_l.copy()
        wl[:len(wl) // 4] = 0.0
        wr = wl.copy()
        traj = SyncedTrajectory.from_arrays(traj.t, wl, wr, traj.x, traj.y, traj.theta)
        # first 2 m window is fully idle, the rest are active
        assert count(segment(traj, HorizonConfig("spatial", 2.0))) == 4

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            segment(SyncedTrajectory.from_arrays([], [], [], [], [], []), HorizonConfig())


class TestTemporal:
    def test_counts(self):
        segs = segment(straight(), HorizonConfig("temporal", 1.0))
        assert count(segs) == 10
        assert all(s.duration == pytest.approx(1.0) for s in segs)

    def test_stationary_robot_is_not_segmented_spatially(self):
        traj = straight(speed=0.0)
        assert count(segment(traj, HorizonConfig("spatial", 1.0))) == 0
        assert count(segment(traj, HorizonConfig("temporal", 1.0))) == 10


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"mode": "distance"}, {"h": 0.0}, {"h": -1.0}, {"stride": "half"},
        {"zero_command_fraction": 1.5}, {"zero_command_threshold": -0.1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            HorizonConfig(**kw)


@st.composite
def random_trajectories(draw):
    n = draw(st.integers(5, 200))
    rng = np.random.default_rng(draw(st.integers(0, 2**31)))
    t = np.cumsum(rng.uniform(0.01, 0.1, n))
    steps = rng.uniform(0, 0.2, (n, 2)) * rng.choice([-1, 1], (n, 2))
    xy = np.cumsum(steps, axis=0)
    theta = rng.uniform(-np.pi, np.pi, n)
    w = rng.uniform(-3, 3, (n, 2))
    return SyncedTrajectory.from_arrays(t, w[:, 0], w[:, 1], xy[:, 0], xy[:, 1], theta)


@settings(max_examples=60, deadline=None)
@given(random_trajectories(), st.floats(0.05, 5.0), st.sampled_from(["spatial", "temporal"]))
def test_window_invariants(traj, h, mode):
    cfg = HorizonConfig(mode, h, "non-overlapping", zero_command_threshold=0.0)
    segs = segment(traj, cfg)
    prev_end = 0
    for s in segs:
        i, j = s.start_index, s.start_index + len(s.t) - 1
        assert i == prev_end  # tiles without gaps or overlap
        prev_end = j
        progress = traj.s if mode == "spatial" else traj.t
        assert progress[j] - progress[i] >= h - 1e-9
        # minimal: dropping the last sample falls short
        assert progress[j - 1] - progress[i] < h - 1e-9
        assert s.path_length == pytest.approx(traj.s[j] - traj.s[i])
        assert s.end_pose == traj.pose(j)


@settings(max_examples=40, deadline=None)
@given(random_trajectories(), st.floats(0.05, 5.0))
def test_sliding_matches_scan(traj, h):
    segs = segment(traj, HorizonConfig("spatial", h, "sliding", zero_command_threshold=0.0))
    got = [(g.start_index, g.start_index + len(g.t) - 1) for g in segs]
    assert got == brute_force_sliding(traj.s, h)


def test_held_mean_weights_by_time():
    t = np.array([0.0, 1.0, 3.0])
    traj = SyncedTrajectory.from_arrays(t, [1.0, 4.0, 100.0], [0.0, 0.0, 0.0],
                                        [0.0, 1.0, 3.0], [0, 0, 0], [0, 0, 0])
    (s,) = segment(traj, HorizonConfig("spatial", 3.0))
    assert s.mean_omega_l == pytest.approx((1.0 * 1 + 4.0 * 2) / 3)
