"""Command/ground-truth logs: CSV I/O, time alignment and synthetic generation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from skidsteer._io import atomic_write_text, fmt
from skidsteer.geometry import InvalidInputError, Pose2D, integrate_path, wrap_angles
from skidsteer.models import (
    ChassisGeometry,
    InvalidParameterError,
    KinematicModel,
    WheelCommand,
    variant_class,
    with_params,
)

log = logging.getLogger(__name__)

COMMAND_HEADER = ("t", "omega_l", "omega_r")
POSE_HEADER = ("t", "x", "y", "theta")
COMMAND_RATE_HZ = 20.0
POSE_RATE_HZ = 10.0


class DataError(ValueError):
    """Malformed, empty or inconsistent log data."""


class AlignmentError(DataError):
    """Command and pose logs do not overlap enough to be synchronised."""


def _as_1d(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=float).reshape(-1)


def _first_non_increasing(t: np.ndarray) -> int | None:
    bad = np.flatnonzero(np.diff(t) <= 0.0)
    return int(bad[0]) + 1 if bad.size else None


@dataclass(frozen=True, eq=False)
class CommandLog:
    t: np.ndarray
    omega_l: np.ndarray
    omega_r: np.ndarray

    def __post_init__(self) -> None:
        for name in ("t", "omega_l", "omega_r"):
            object.__setattr__(self, name, _as_1d(getattr(self, name)))
        if not (self.t.shape == self.omega_l.shape == self.omega_r.shape):
            raise DataError("command log columns differ in length")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.omega_l))
                and np.all(np.isfinite(self.omega_r))):
            raise DataError("command log contains non-finite values")
        i = _first_non_increasing(self.t)
        if i is not None:
            raise DataError(f"command timestamps not strictly increasing at sample {i}")

    def __len__(self) -> int:
        return self.t.size

    def __iter__(self) -> Iterator[WheelCommand]:
        for t, wl, wr in zip(self.t, self.omega_l, self.omega_r):
            yield WheelCommand(float(t), float(wl), float(wr))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CommandLog):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in COMMAND_HEADER)

    @classmethod
    def from_commands(cls, commands) -> "CommandLog":
        rows = [(c.t, c.omega_l, c.omega_r) for c in commands]
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])


@dataclass(frozen=True, eq=False)
class PoseLog:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray

    def __post_init__(self) -> None:
        for name in POSE_HEADER:
            object.__setattr__(self, name, _as_1d(getattr(self, name)))
        if not (self.t.shape == self.x.shape == self.y.shape == self.theta.shape):
            raise DataError("pose log columns differ in length")
        if not all(np.all(np.isfinite(getattr(self, n))) for n in POSE_HEADER):
            raise DataError("pose log contains non-finite values")
        i = _first_non_increasing(self.t)
        if i is not None:
            raise DataError(f"pose timestamps not strictly increasing at sample {i}")

    def __len__(self) -> int:
        return self.t.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PoseLog):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in POSE_HEADER)

    def pose(self, i: int) -> Pose2D:
        return Pose2D(float(self.x[i]), float(self.y[i]), float(self.theta[i]))


@dataclass(frozen=True, eq=False)
class SyncedTrajectory:
    """Commands with the ground-truth pose interpolated at each command time.

    ``s`` is the cumulative ground-truth path length, starting at 0.
    """

    t: np.ndarray
    omega_l: np.ndarray
    omega_r: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    s: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SyncedTrajectory):
            return NotImplemented
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self))

    @property
    def poses(self) -> np.ndarray:
        return np.column_stack([self.x, self.y, self.theta])

    def pose(self, i: int) -> Pose2D:
        return Pose2D(float(self.x[i]), float(self.y[i]), float(self.theta[i]))

    def to_logs(self) -> tuple[CommandLog, PoseLog]:
        return (
            CommandLog(self.t, self.omega_l, self.omega_r),
            PoseLog(self.t, self.x, self.y, self.theta),
        )

    @classmethod
    def from_arrays(cls, t, omega_l, omega_r, x, y, theta) -> "SyncedTrajectory":
        x, y = _as_1d(x), _as_1d(y)
        return cls(
            _as_1d(t), _as_1d(omega_l), _as_1d(omega_r), x, y,
            wrap_angles(_as_1d(theta)), cumulative_path_length(x, y),
        )


def cumulative_path_length(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    steps = np.hypot(np.diff(x), np.diff(y))
    return np.concatenate([[0.0], np.cumsum(steps)])


# ---------------------------------------------------------------- CSV I/O

def _read_csv(path, header: tuple[str, ...]) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty log") from None
        if tuple(h.strip() for h in first) != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(first)}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{line}: non-finite value")
            if rows and values[0] <= rows[-1][1][0]:
                raise DataError(
                    f"{path}:{line}: timestamp {values[0]} not strictly increasing"
                )
            rows.append((line, values))
    if not rows:
        raise DataError(f"{path}: empty log")
    return np.array([v for _, v in rows], dtype=float)


def load_command_log(path) -> CommandLog:
    arr = _read_csv(path, COMMAND_HEADER)
    return CommandLog(arr[:, 0], arr[:, 1], arr[:, 2])


def load_pose_log(path) -> PoseLog:
    arr = _read_csv(path, POSE_HEADER)
    return PoseLog(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def _csv_text(header, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*columns):
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_command_log(path, cmds: CommandLog) -> Path:
    return atomic_write_text(path, _csv_text(COMMAND_HEADER, (cmds.t, cmds.omega_l, cmds.omega_r)))


def write_pose_log(path, poses: PoseLog) -> Path:
    return atomic_write_text(path, _csv_text(POSE_HEADER, (poses.t, poses.x, poses.y, poses.theta)))


# ------------------------------------------------------------ alignment

def synchronize(cmds: CommandLog, poses: PoseLog, min_overlap: float = 1.0) -> SyncedTrajectory:
    """Interpolate ground truth onto the command timestamps inside the common time span.

    Positions are interpolated linearly, headings along the shortest arc.
    """
    if len(cmds) == 0 or len(poses) == 0:
        raise AlignmentError("cannot synchronise an empty log")
    lo = max(cmds.t[0], poses.t[0])
    hi = min(cmds.t[-1], poses.t[-1])
    if hi - lo < min_overlap:
        raise AlignmentError(
            f"logs overlap for {max(hi - lo, 0.0):.3f} s, need at least {min_overlap} s"
        )
    keep = (cmds.t >= lo) & (cmds.t <= hi)
    t = cmds.t[keep]
    x = np.interp(t, poses.t, poses.x)
    y = np.interp(t, poses.t, poses.y)
    theta = wrap_angles(np.interp(t, poses.t, np.unwrap(poses.theta)))
    dropped = int(keep.size - keep.sum())
    if dropped:
        log.debug("synchronize: dropped %d commands outside [%.3f, %.3f]", dropped, lo, hi)
    return SyncedTrajectory(t, cmds.omega_l[keep], cmds.omega_r[keep], x, y, theta,
                            cumulative_path_length(x, y))


# ------------------------------------------------------------- simulation

@dataclass(frozen=True)
class AngularSaturation:
    """Piecewise-linear distortion of the rotation per meter travelled.

    Below ``threshold`` (rad/m) rotation is unchanged; beyond it the excess is
    scaled by ``gain`` (< 1 flattens, > 1 steepens).
    """

    threshold: float
    gain: float

    def apply(self, vx: np.ndarray, omega: np.ndarray) -> np.ndarray:
        # written against |vx| so zero-radius turns need no division
        knee = self.threshold * np.abs(vx)
        mag = np.abs(omega)
        return np.where(mag > knee, np.sign(omega) * (knee + self.gain * (mag - knee)), omega)


@dataclass(frozen=True)
class SimScenario:
    true_model: KinematicModel
    command_profile: CommandLog
    twist_noise_std: tuple[float, float, float] = (0.0, 0.0, 0.0)
    angular_saturation: AngularSaturation | None = None
    rng_seed: int = 0
    pose_rate_hz: float = POSE_RATE_HZ
    # optional mask over (omega_l, omega_r) restricting where noise is injected
    noise_gate: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )

    def __post_init__(self) -> None:
        if len(self.twist_noise_std) != 3 or any(
            not (s >= 0 and math.isfinite(s)) for s in self.twist_noise_std
        ):
            raise InvalidParameterError(f"noise stds must be finite and >= 0: {self.twist_noise_std}")
        if self.pose_rate_hz <= 0:
            raise InvalidParameterError("pose rate must be positive")


def simulate(scenario: SimScenario) -> tuple[CommandLog, PoseLog]:
    """Generate ground truth by dead-reckoning the true model with twist noise.

    Noise is drawn per command interval in the body frame and only while the
    robot is commanded to move.  The pose log is downsampled to
    ``pose_rate_hz``; the command log is returned unchanged.
    """
    cmds = scenario.command_profile
    if len(cmds) < 2:
        raise DataError("command profile needs at least 2 samples")
    rng = np.random.default_rng(scenario.rng_seed)
    wl, wr = cmds.omega_l[:-1], cmds.omega_r[:-1]
    vx, vy, omega = (np.array(a, dtype=float) for a in scenario.true_model.twist_arrays(wl, wr))
    noise = rng.standard_normal((3, wl.size)) * np.asarray(scenario.twist_noise_std)[:, None]
    moving = (wl != 0.0) | (wr != 0.0)
    if scenario.noise_gate is not None:
        moving &= np.asarray(scenario.noise_gate(wl, wr), dtype=bool)
    noise *= moving
    vx, vy, omega = vx + noise[0], vy + noise[1], omega + noise[2]
    if scenario.angular_saturation is not None:
        omega = scenario.angular_saturation.apply(vx, omega)
    path = integrate_path(Pose2D(), vx, vy, omega, np.diff(cmds.t))

    period = 1.0 / scenario.pose_rate_hz
    keep = _downsample_mask(cmds.t, period)
    poses = PoseLog(cmds.t[keep], path[keep, 0], path[keep, 1], path[keep, 2])
    return cmds, poses


def _downsample_mask(t: np.ndarray, period: float) -> np.ndarray:
    """Keep the first sample at or after each multiple of ``period`` from ``t[0]``."""
    ticks = np.floor((t - t[0]) / period + 1e-9)
    keep = np.concatenate([[True], np.diff(ticks) > 0])
    return keep


def excitation_profile(
    duration: float,
    speed_limit: float,
    seed: int,
    rate_hz: float = COMMAND_RATE_HZ,
    hold_choices: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5),
    grid: int = 10,
    special_fraction: float = 0.25,
) -> CommandLog:
    """Piecewise-constant wheel commands covering ``[-speed_limit, speed_limit]²``.

    Most pieces draw a point inside a not-yet-visited cell of a ``grid × grid``
    partition of the command box (cells are revisited once all are used);
    the remaining ``special_fraction`` are zero-radius turns, straight lines
    and gentle arcs in either direction.  Hold times are multiples of the
    ground-truth period so command switches line up with pose samples.
    """
    if not duration > 0:
        raise DataError(f"profile duration must be positive, got {duration}")
    if not speed_limit > 0:
        raise InvalidParameterError(f"speed limit must be positive, got {speed_limit}")
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate_hz)) + 1
    t = np.arange(n) / rate_hz
    wl = np.empty(n)
    wr = np.empty(n)
    edges = np.linspace(-speed_limit, speed_limit, grid + 1)
    cells: list[int] = []
    i = 0
    while i < n:
        hold = int(round(rng.choice(hold_choices) * rate_hz))
        if rng.random() < special_fraction:
            kind = rng.integers(3)
            mag = rng.uniform(0.3, 1.0) * speed_limit
            sign = rng.choice([-1.0, 1.0])
            if kind == 0:
                pair = (-sign * mag, sign * mag)
            elif kind == 1:
                pair = (sign * mag, sign * mag)
            else:
                ratio = rng.uniform(0.3, 0.8)
                pair = (mag, ratio * mag) if sign > 0 else (ratio * mag, mag)
        else:
            if not cells:
                cells = list(rng.permutation(grid * grid))
            c = cells.pop()
            row, col = divmod(c, grid)
            pair = (rng.uniform(edges[row], edges[row + 1]), rng.uniform(edges[col], edges[col + 1]))
        wl[i:i + hold], wr[i:i + hold] = pair
        i += hold
    return CommandLog(t, wl, wr)


def driving_profile(
    duration: float,
    speed_limit: float,
    seed: int,
    rate_hz: float = COMMAND_RATE_HZ,
    hold_choices: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5),
    max_turn_ratio: float = 0.8,
    min_speed_fraction: float = 0.2,
) -> CommandLog:
    """Forward driving with random turns, as an operator would drive a field robot.

    Each piece holds ``w_l = u (1 - q)``, ``w_r = u (1 + q)`` with the turn
    ratio ``q`` uniform in ``±max_turn_ratio`` and ``u`` chosen so neither
    wheel exceeds ``speed_limit``.  Unlike :func:`excitation_profile` the
    robot never reverses or spins in place, so dead-reckoning drift builds up
    along the path instead of cancelling out.
    """
    if not duration > 0:
        raise DataError(f"profile duration must be positive, got {duration}")
    if not speed_limit > 0:
        raise InvalidParameterError(f"speed limit must be positive, got {speed_limit}")
    if not 0 <= max_turn_ratio < 1:
        raise InvalidParameterError("turn ratio must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n = int(round(duration * rate_hz)) + 1
    wl = np.empty(n)
    wr = np.empty(n)
    i = 0
    while i < n:
        hold = int(round(rng.choice(hold_choices) * rate_hz))
        q = rng.uniform(-max_turn_ratio, max_turn_ratio)
        u = rng.uniform(min_speed_fraction, 1.0) * speed_limit / (1.0 + abs(q))
        wl[i:i + hold], wr[i:i + hold] = u * (1 - q), u * (1 + q)
        i += hold
    return CommandLog(np.arange(n) / rate_hz, wl, wr)


PROFILES = {"excitation": excitation_profile, "driving": driving_profile}


# ------------------------------------------------------- scenario config

def scenario_from_config(doc: dict, base_dir: str | os.PathLike = ".") -> SimScenario:
    """Build a scenario from a flat key-value mapping (see README for keys)."""
    try:
        cls = variant_class(str(doc["variant"]))
        geometry = ChassisGeometry(float(doc.get("r", 0.3)), float(doc.get("b", 1.2)))
        model = with_params(cls(geometry), doc.get("params", []))
        if doc.get("command_csv"):
            profile = load_command_log(Path(base_dir) / doc["command_csv"])
        else:
            kind = str(doc.get("profile", "excitation"))
            if kind not in PROFILES:
                raise DataError(f"unknown profile {kind!r}; expected one of {sorted(PROFILES)}")
            profile = PROFILES[kind](
                float(doc.get("duration", 300.0)),
                float(doc.get("speed_limit", 5.0)),
                int(doc.get("profile_seed", 0)),
            )
        noise = tuple(float(doc.get(k, 0.0)) for k in ("noise_vx", "noise_vy", "noise_omega"))
        sat = None
        if doc.get("saturation_threshold") is not None:
            sat = AngularSaturation(float(doc["saturation_threshold"]),
                                    float(doc.get("saturation_gain", 0.0)))
        return SimScenario(
            true_model=model,
            command_profile=profile,
            twist_noise_std=noise,  # type: ignore[arg-type]
            angular_saturation=sat,
            rng_seed=int(doc.get("seed", 0)),
            pose_rate_hz=float(doc.get("pose_rate_hz", POSE_RATE_HZ)),
        )
    except KeyError as exc:
        raise DataError(f"scenario config missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"invalid scenario config: {exc}") from exc


def load_scenario(path) -> SimScenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataError(f"{path}: scenario must be a flat key-value object")
    return scenario_from_config(doc, path.parent)
