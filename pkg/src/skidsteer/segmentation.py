"""Split a synchronised trajectory into spatial or temporal horizon windows."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from skidsteer.dataset import SyncedTrajectory
from skidsteer.geometry import InvalidInputError, Pose2D, wrap_angles
from skidsteer.models import WheelCommand

log = logging.getLogger(__name__)

# slack on the horizon comparison so exact multiples survive summation round-off
_CUT_TOL = 1e-9


@dataclass(frozen=True)
class HorizonConfig:
    mode: Literal["spatial", "temporal"] = "spatial"
    h: float = 2.0
    stride: Literal["non-overlapping", "sliding"] = "non-overlapping"
    zero_command_threshold: float = 0.05
    zero_command_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in ("spatial", "temporal"):
            raise ValueError(f"mode must be spatial or temporal, got {self.mode!r}")
        if self.stride not in ("non-overlapping", "sliding"):
            raise ValueError(f"stride must be non-overlapping or sliding, got {self.stride!r}")
        if not self.h > 0:
            raise ValueError(f"horizon must be positive, got {self.h}")
        if not self.zero_command_threshold >= 0:
            raise ValueError("zero-command threshold must be >= 0")
        if not 0.0 <= self.zero_command_fraction <= 1.0:
            raise ValueError("zero-command fraction must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class Segment:
    """Ground-truth-anchored window ``[start, end]`` of a trajectory.

    ``t``, ``omega_l`` and ``omega_r`` hold every command in the window,
    endpoints included; the last command is never integrated.
    """

    start_pose: Pose2D
    end_pose: Pose2D
    t: np.ndarray
    omega_l: np.ndarray
    omega_r: np.ndarray
    path_length: float
    start_index: int = 0
    # unwrapped ground-truth heading change over the window
    heading_change: float = 0.0

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def mean_omega_l(self) -> float:
        return _held_mean(self.t, self.omega_l)

    @property
    def mean_omega_r(self) -> float:
        return _held_mean(self.t, self.omega_r)

    @property
    def commands(self) -> list[WheelCommand]:
        return [WheelCommand(float(t), float(l), float(r))
                for t, l, r in zip(self.t, self.omega_l, self.omega_r)]


def _held_mean(t: np.ndarray, values: np.ndarray) -> float:
    """Time-weighted mean of a zero-order-held signal over the window."""
    dt = np.diff(t)
    return float(np.dot(values[:-1], dt) / dt.sum())


def _window_ends(progress: np.ndarray, h: float) -> np.ndarray:
    """For every start sample, the first index whose progress reaches start + h (or -1)."""
    ends = np.searchsorted(progress, progress + h - _CUT_TOL, side="left")
    return np.where(ends < progress.size, ends, -1)


def segment(traj: SyncedTrajectory, cfg: HorizonConfig) -> list[Segment]:
    """Cut ``traj`` into horizon windows and drop zero-command outliers."""
    n = len(traj)
    if n == 0:
        raise InvalidInputError("cannot segment an empty trajectory")
    progress = traj.s if cfg.mode == "spatial" else traj.t - traj.t[0]
    ends = _window_ends(progress, cfg.h)

    pairs: list[tuple[int, int]] = []
    if cfg.stride == "sliding":
        pairs = [(i, int(j)) for i, j in enumerate(ends) if j > i]
    else:
        i = 0
        while i < n and ends[i] > i:
            pairs.append((i, int(ends[i])))
            i = int(ends[i])

    dtheta = np.concatenate([[0.0], np.cumsum(wrap_angles(np.diff(traj.theta)))])
    idle = np.maximum(np.abs(traj.omega_l), np.abs(traj.omega_r)) < cfg.zero_command_threshold
    segments = []
    dropped = 0
    for i, j in pairs:
        if idle[i:j + 1].mean() > cfg.zero_command_fraction:
            dropped += 1
            continue
        segments.append(Segment(
            start_pose=traj.pose(i),
            end_pose=traj.pose(j),
            t=traj.t[i:j + 1],
            omega_l=traj.omega_l[i:j + 1],
            omega_r=traj.omega_r[i:j + 1],
            path_length=float(traj.s[j] - traj.s[i]),
            start_index=i,
            heading_change=float(dtheta[j] - dtheta[i]),
        ))
    if not pairs:
        total = progress[-1] if n else 0.0
        log.warning("horizon %.3g exceeds trajectory extent %.3g (%s); no segments",
                    cfg.h, total, cfg.mode)
    elif dropped:
        log.info("segment: dropped %d of %d windows as zero-command outliers", dropped, len(pairs))
    return segments


def count(segments: Sequence[Segment]) -> int:
    return len(segments)
