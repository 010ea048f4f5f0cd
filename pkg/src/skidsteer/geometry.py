"""Planar pose/twist algebra and exact constant-twist dead reckoning.

Poses are (x, y, theta) in the world frame, twists are body-frame
(vx, vy, omega).  Every public pose has theta wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numba
import numpy as np

if TYPE_CHECKING:
    from skidsteer.models import KinematicModel, WheelCommand

# below this |omega * dt| the arc functions switch to their Taylor series
SERIES_THRESHOLD = 1e-9


class InvalidInputError(ValueError):
    """Raised on non-finite or otherwise malformed numeric input."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    wrapped = np.remainder(theta, 2.0 * np.pi)
    wrapped = np.where(wrapped > np.pi, wrapped - 2.0 * np.pi, wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def isclose(self, other: "Pose2D", tol: float = 1e-9) -> bool:
        return (
            abs(self.x - other.x) <= tol
            and abs(self.y - other.y) <= tol
            and abs(wrap_angle(self.theta - other.theta)) <= tol
        )


@dataclass(frozen=True)
class Twist2D:
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.vx, self.vy, self.omega)):
            raise InvalidInputError(f"non-finite twist {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega])


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Return ``a ∘ b``: the pose ``b`` expressed in ``a``'s frame, moved to the world."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(a: Pose2D) -> Pose2D:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def between(a: Pose2D, b: Pose2D) -> Pose2D:
    """Relative pose ``a⁻¹ ∘ b``."""
    dx, dy = b.x - a.x, b.y - a.y
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta)


def _arc_terms(phi: np.ndarray):
    """Return ``sin(phi)/phi``, ``(1 - cos(phi))/phi``, ``cos(phi)``, ``sin(phi)``.

    Entries with ``|phi|`` below the series threshold use the Taylor expansion
    so the straight-line limit is continuous.
    """
    sin, cos = np.sin(phi), np.cos(phi)
    small = np.abs(phi) < SERIES_THRESHOLD
    # 1 - cos(phi) as 2 sin^2(phi/2): no cancellation for small phi
    half = np.sin(0.5 * phi)
    if small.any():
        safe = np.where(small, 1.0, phi)
        a = sin / safe
        b = 2.0 * half * half / safe
        ps = phi[small]
        a[small] = 1.0 - ps * ps / 6.0
        b[small] = ps / 2.0 - ps**3 / 24.0
    else:
        a = sin / phi
        b = 2.0 * half * half / phi
    return a, b, cos, sin


def arc_displacement(vx, vy, omega, dt):
    """Body-frame displacement and heading change of a constant twist held for ``dt``.

    Accepts scalars or broadcastable arrays; returns ``(dx, dy, dtheta)``.
    """
    phi = np.atleast_1d(np.asarray(omega, dtype=float) * dt)
    a, b, _, _ = _arc_terms(phi)
    dx = dt * (vx * a - vy * b)
    dy = dt * (vx * b + vy * a)
    shape = np.shape(np.asarray(omega) * dt)
    return dx.reshape(shape), dy.reshape(shape), phi.reshape(shape)


def integrate(pose: Pose2D, twist: Twist2D, dt: float) -> Pose2D:
    """Propagate ``pose`` along the circular arc traced by ``twist`` over ``dt`` seconds."""
    if not math.isfinite(dt) or dt < 0.0:
        raise InvalidInputError(f"dt must be finite and non-negative, got {dt}")
    dx, dy, dtheta = arc_displacement(twist.vx, twist.vy, twist.omega, dt)
    return compose(pose, Pose2D(float(dx), float(dy), float(dtheta)))


def euler_step(pose: Pose2D, twist: Twist2D, dt: float) -> Pose2D:
    """First-order forward-Euler step; kept for convergence comparisons only."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Pose2D(
        pose.x + dt * (c * twist.vx - s * twist.vy),
        pose.y + dt * (s * twist.vx + c * twist.vy),
        pose.theta + dt * twist.omega,
    )


def _check_timestamps(t: np.ndarray) -> None:
    if t.size < 2:
        raise InvalidInputError("rollout needs at least 2 commands")
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("non-finite command timestamp")
    bad = np.flatnonzero(np.diff(t) <= 0.0)
    if bad.size:
        raise InvalidInputError(f"command timestamps not strictly increasing at index {bad[0] + 1}")


def rollout(
    model: "KinematicModel", start: Pose2D, commands: Sequence["WheelCommand"]
) -> list[Pose2D]:
    """Dead-reckon one pose per command timestamp, holding each command until the next."""
    from skidsteer.models import predict_twist

    t = np.array([c.t for c in commands], dtype=float)
    _check_timestamps(t)
    poses = [start]
    for cmd, dt in zip(commands[:-1], np.diff(t)):
        poses.append(integrate(poses[-1], predict_twist(model, cmd), float(dt)))
    return poses


@numba.njit(cache=True)
def _final_pose_kernel(start, vx, vy, omega, dt, lengths, out):
    for n in range(start.shape[0]):
        x, y, theta = start[n, 0], start[n, 1], start[n, 2]
        ch, sh = math.cos(theta), math.sin(theta)
        for k in range(lengths[n]):
            h = dt[n, k]
            phi = omega[n, k] * h
            c, s = math.cos(phi), math.sin(phi)
            if abs(phi) < SERIES_THRESHOLD:
                a = 1.0 - phi * phi / 6.0
                b = phi / 2.0 - phi * phi * phi / 24.0
            else:
                half = math.sin(0.5 * phi)
                a = s / phi
                b = 2.0 * half * half / phi
            dx = h * (vx[n, k] * a - vy[n, k] * b)
            dy = h * (vx[n, k] * b + vy[n, k] * a)
            x += ch * dx - sh * dy
            y += sh * dx + ch * dy
            ch, sh = ch * c - sh * s, sh * c + ch * s
            theta += phi
        out[n, 0] = x
        out[n, 1] = y
        out[n, 2] = theta


def rollout_final_batch(
    start: np.ndarray,
    vx: np.ndarray,
    vy: np.ndarray,
    omega: np.ndarray,
    dt: np.ndarray,
    lengths: np.ndarray | None = None,
) -> np.ndarray:
    """Final poses of many constant-twist rollouts at once.

    ``start`` is ``(N, 3)``; the twist and ``dt`` arrays are ``(N, L)``.
    Row ``n`` integrates its first ``lengths[n]`` steps (all ``L`` if not
    given; zero-``dt`` padding is harmless either way).  The heading's unit
    vector is advanced by rotation, so each step needs one sine/cosine pair.
    Returns ``(N, 3)`` with wrapped headings.
    """
    start = np.ascontiguousarray(start, dtype=float)
    shape = np.broadcast_shapes(np.shape(vx), np.shape(vy), np.shape(omega), np.shape(dt))
    vx, vy, omega, dt = (
        np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), shape))
        for a in (vx, vy, omega, dt)
    )
    if lengths is None:
        lengths = np.full(start.shape[0], shape[1], dtype=np.int64)
    out = np.empty_like(start)
    _final_pose_kernel(start, vx, vy, omega, dt, np.asarray(lengths, dtype=np.int64), out)
    out[:, 2] = wrap_angles(out[:, 2])
    return out


def integrate_path(
    start: Pose2D,
    vx: np.ndarray,
    vy: np.ndarray,
    omega: np.ndarray,
    dt: np.ndarray,
) -> np.ndarray:
    """All poses of a piecewise-constant-twist path, shape ``(L + 1, 3)``.

    Row ``k + 1`` is the pose after holding twist ``k`` for ``dt[k]``.
    """
    dx, dy, dtheta = arc_displacement(vx, vy, omega, dt)
    heading = start.theta + np.concatenate([[0.0], np.cumsum(dtheta)])
    c, s = np.cos(heading[:-1]), np.sin(heading[:-1])
    x = start.x + np.concatenate([[0.0], np.cumsum(c * dx - s * dy)])
    y = start.y + np.concatenate([[0.0], np.cumsum(s * dx + c * dy)])
    return np.column_stack([x, y, wrap_angles(heading)])
