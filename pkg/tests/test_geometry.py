import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from skidsteer.geometry import (
    InvalidInputError,
    Pose2D,
    Twist2D,
    between,
    compose,
    euler_step,
    integrate,
    integrate_path,
    inverse,
    rollout,
    rollout_final_batch,
    wrap_angle,
)
from skidsteer.models import ExtendedDDSymmetric, FullLinear, IdealDD, RocBased, WheelCommand

coord = st.floats(-50, 50)
angle = st.floats(-10, 10)
poses = st.builds(Pose2D, coord, coord, angle)
twists = st.builds(Twist2D, st.floats(-3, 3), st.floats(-1, 1), st.floats(-3, 3))


def close(a: Pose2D, b: Pose2D, tol=1e-9):
    assert a.isclose(b, tol), (a, b)


def quadrature(pose, twist, dt):
    """Independent oracle: integrate the world-frame kinematics numerically."""
    def rhs(_, s):
        c, sn = math.cos(s[2]), math.sin(s[2])
        return [c * twist.vx - sn * twist.vy, sn * twist.vx + c * twist.vy, twist.omega]
    sol = solve_ivp(rhs, (0.0, dt), [pose.x, pose.y, pose.theta], rtol=1e-12, atol=1e-12)
    return Pose2D(*sol.y[:, -1])


class TestWrap:
    @pytest.mark.parametrize("theta, expected", [
        (0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi), (3 * math.pi, math.pi),
        (2 * math.pi, 0.0), (-0.5, -0.5),
    ])
    def test_values(self, theta, expected):
        assert wrap_angle(theta) == pytest.approx(expected, abs=1e-12)

    @given(st.floats(-1e3, 1e3))
    def test_range(self, theta):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi


class TestCompose:
    def test_identity(self):
        close(compose(Pose2D(), Pose2D(1, 2, 0.3)), Pose2D(1, 2, 0.3))

    def test_quarter_turn(self):
        close(compose(Pose2D(0, 0, math.pi / 2), Pose2D(1, 0, 0)), Pose2D(0, 1, math.pi / 2))

    def test_half_turn_self_inverse(self):
        p = compose(Pose2D(1, 0, math.pi), Pose2D(1, 0, math.pi))
        close(p, Pose2D(0, 0, 0))
        assert -math.pi < p.theta <= math.pi

    @given(poses, poses, poses)
    def test_associative(self, a, b, c):
        close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-8)

    @given(poses)
    def test_inverse(self, a):
        close(compose(a, inverse(a)), Pose2D(), 1e-9)


class TestBetween:
    def test_examples(self):
        p = Pose2D(3, -1, 2.0)
        close(between(p, p), Pose2D())
        close(between(Pose2D(), Pose2D(2, 0, 0.1)), Pose2D(2, 0, 0.1))
        close(between(Pose2D(0, 0, math.pi / 2), Pose2D(0, 1, math.pi / 2)), Pose2D(1, 0, 0))

    @given(poses, poses)
    def test_round_trip(self, a, b):
        close(compose(a, between(a, b)), b, 1e-9)


class TestIntegrate:
    def test_straight(self):
        close(integrate(Pose2D(), Twist2D(1, 0, 0), 1.0), Pose2D(1, 0, 0))

    def test_quarter_arc(self):
        # radius 2/pi quarter circle; checked against numerical quadrature
        got = integrate(Pose2D(), Twist2D(1, 0, math.pi / 2), 1.0)
        oracle = quadrature(Pose2D(), Twist2D(1, 0, math.pi / 2), 1.0)
        close(got, oracle, 1e-9)
        close(got, Pose2D(2 / math.pi, 2 / math.pi, math.pi / 2), 1e-12)

    def test_pure_rotation(self):
        close(integrate(Pose2D(), Twist2D(0, 0, 1), math.pi), Pose2D(0, 0, math.pi))

    @settings(max_examples=50, deadline=None)
    @given(poses, twists, st.floats(0, 2))
    def test_matches_quadrature(self, p, tw, dt):
        close(integrate(p, tw, dt), quadrature(p, tw, dt), 1e-8)

    @given(poses, twists, st.floats(0, 5))
    def test_split_exactness(self, p, tw, dt):
        half = integrate(integrate(p, tw, dt / 2), tw, dt / 2)
        close(integrate(p, tw, dt), half, 1e-9)

    def test_series_branch_continuous(self):
        # just below and above the series threshold give the same arc
        p = Pose2D(0.3, -0.2, 0.4)
        below = integrate(p, Twist2D(1.0, 0.2, 0.9999e-9), 1.0)
        above = integrate(p, Twist2D(1.0, 0.2, 1.0001e-9), 1.0)
        close(below, above, 1e-12)

    @pytest.mark.parametrize("bad", [(math.nan, 1.0), (1.0, -0.1), (1.0, math.inf)])
    def test_invalid(self, bad):
        omega, dt = bad
        with pytest.raises(InvalidInputError):
            integrate(Pose2D(), Twist2D(1.0, 0.0, omega), dt)

    def test_euler_local_error_is_second_order(self):
        tw = Twist2D(1.0, 0.3, 0.8)
        p = Pose2D(0.5, -1.0, 0.7)
        dts = np.array([1e-1, 1e-2, 1e-3, 1e-4])
        err = []
        for dt in dts:
            e, x = euler_step(p, tw, dt), integrate(p, tw, dt)
            err.append(math.hypot(e.x - x.x, e.y - x.y))
        slope = np.polyfit(np.log(dts), np.log(err), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.2)


class TestRollout:
    def test_ideal_straight(self, geometry):
        cmds = [WheelCommand(0.1 * k, 1.0, 1.0) for k in range(11)]
        path = rollout(IdealDD(geometry), Pose2D(), cmds)
        assert len(path) == 11
        assert path[0] == Pose2D()
        close(path[-1], Pose2D(0.3, 0, 0), 1e-12)

    @pytest.mark.parametrize("model", [
        IdealDD(), ExtendedDDSymmetric(alpha=0.8, b_hat=2.0), RocBased(alpha=0.9, beta1=1.0, beta2=0.2),
    ])
    def test_zero_commands_stay_put(self, model):
        start = Pose2D(1.0, 2.0, 0.5)
        path = rollout(model, start, [WheelCommand(0.05 * k, 0.0, 0.0) for k in range(20)])
        assert all(p == start for p in path)

    def test_non_monotonic(self):
        cmds = [WheelCommand(0.0, 1, 1), WheelCommand(0.1, 1, 1), WheelCommand(0.1, 1, 1)]
        with pytest.raises(InvalidInputError, match="index 2"):
            rollout(IdealDD(), Pose2D(), cmds)

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            rollout(IdealDD(), Pose2D(), [WheelCommand(0.0, 1, 1)])

    @settings(max_examples=30, deadline=None)
    @given(poses, poses, st.integers(0, 10_000))
    def test_left_invariance(self, g, p, seed):
        rng = np.random.default_rng(seed)
        t = np.cumsum(rng.uniform(0.01, 0.2, 15))
        w = rng.uniform(-4, 4, (15, 2))
        cmds = [WheelCommand(ti, wl, wr) for ti, (wl, wr) in zip(t, w)]
        model = FullLinear(gamma_11=0.46, gamma_12=0.36, gamma_21=-0.31, gamma_22=0.34,
                           gamma_31=-0.13, gamma_32=0.12)
        moved = rollout(model, compose(g, p), cmds)
        for a, b in zip(rollout(model, p, cmds), moved):
            close(compose(g, a), b, 1e-9)

    def test_batch_agrees_with_sequential(self):
        rng = np.random.default_rng(3)
        model = ExtendedDDSymmetric(alpha=0.86, b_hat=3.08)
        starts, finals, rows = [], [], []
        for n in range(20):
            k = int(rng.integers(2, 40))
            t = np.cumsum(rng.uniform(0.02, 0.1, k))
            w = rng.uniform(-5, 5, (k, 2))
            start = Pose2D(*rng.uniform(-5, 5, 3))
            cmds = [WheelCommand(ti, wl, wr) for ti, (wl, wr) in zip(t, w)]
            finals.append(rollout(model, start, cmds)[-1])
            starts.append(start.as_array())
            rows.append((np.diff(t), w[:-1]))
        width = max(len(d) for d, _ in rows)
        dt = np.zeros((20, width))
        wl = np.zeros((20, width))
        wr = np.zeros((20, width))
        for i, (d, w) in enumerate(rows):
            dt[i, :len(d)], wl[i, :len(d)], wr[i, :len(d)] = d, w[:, 0], w[:, 1]
        vx, vy, om = model.twist_arrays(wl, wr)
        batch = rollout_final_batch(np.array(starts), vx, vy, om, dt)
        for row, ref in zip(batch, finals):
            close(Pose2D(*row), ref, 1e-9)

    def test_integrate_path_matches_rollout(self):
        rng = np.random.default_rng(5)
        model = ExtendedDDSymmetric(alpha=0.9, b_hat=2.0)
        t = np.cumsum(rng.uniform(0.02, 0.1, 50))
        w = rng.uniform(-5, 5, (50, 2))
        cmds = [WheelCommand(ti, a, b) for ti, (a, b) in zip(t, w)]
        ref = rollout(model, Pose2D(1, 1, 1), cmds)
        vx, vy, om = model.twist_arrays(w[:-1, 0], w[:-1, 1])
        path = integrate_path(Pose2D(1, 1, 1), vx, vy, om, np.diff(t))
        for row, p in zip(path, ref):
            close(Pose2D(*row), p, 1e-9)
