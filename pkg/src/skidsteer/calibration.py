"""Parameter identification: final-pose Mahalanobis loss and bounded multi-start simplex search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from skidsteer.geometry import InvalidInputError, rollout_final_batch, wrap_angles
from skidsteer.models import (
    ChassisGeometry,
    KinematicModel,
    nominal_model,
    variant_class,
    with_params,
)
from skidsteer.segmentation import Segment

log = logging.getLogger(__name__)


class NothingToTrainError(ValueError):
    """The requested variant has no trainable parameters."""


@dataclass(frozen=True, eq=False)
class LossConfig:
    sigma: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self) -> None:
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (3, 3):
            raise ValueError(f"sigma must be 3x3, got shape {sigma.shape}")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12):
            raise ValueError("sigma must be symmetric")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise ValueError("sigma must be positive definite") from None
        object.__setattr__(self, "sigma", sigma)

    @property
    def information(self) -> np.ndarray:
        return np.linalg.inv(self.sigma)


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    n_starts: int = 16
    max_evals: int = 2000
    xtol: float = 1e-8
    include_nominal: bool = True


@dataclass(frozen=True)
class CalibrationReport:
    model: KinematicModel
    final_loss: float
    iterations: int
    evaluations: int
    restarts_used: int
    converged: bool
    seed: int
    start_losses: tuple[float, ...] = ()
    best_start: int = 0

    def metadata(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "seed": self.seed,
            "best_start": self.best_start,
        }


class SegmentBatch:
    """Segments packed into zero-padded ``(N, L)`` arrays for vectorised rollout."""

    def __init__(self, segments: Sequence[Segment]):
        if len(segments) == 0:
            raise InvalidInputError("no segments to evaluate")
        n = len(segments)
        width = max(len(s.t) - 1 for s in segments)
        self.dt = np.zeros((n, width))
        self.omega_l = np.zeros((n, width))
        self.omega_r = np.zeros((n, width))
        for i, s in enumerate(segments):
            k = len(s.t) - 1
            self.dt[i, :k] = np.diff(s.t)
            self.omega_l[i, :k] = s.omega_l[:-1]
            self.omega_r[i, :k] = s.omega_r[:-1]
        self.start = np.array([s.start_pose.as_array() for s in segments])
        self.end = np.array([s.end_pose.as_array() for s in segments])
        self.path_length = np.array([s.path_length for s in segments])
        self.lengths = np.array([len(s.t) - 1 for s in segments], dtype=np.int64)

    def __len__(self) -> int:
        return self.start.shape[0]

    def predict(self, model: KinematicModel, clamps=None) -> np.ndarray:
        """Predicted final pose of every segment, ``(N, 3)``."""
        # degenerate widths on the bounds give inf/nan; the loss maps those to inf
        with np.errstate(divide="ignore", invalid="ignore"):
            vx, vy, omega = model.twist_arrays(self.omega_l, self.omega_r, clamps)
            return rollout_final_batch(self.start, vx, vy, omega, self.dt, self.lengths)

    def residuals(self, model: KinematicModel) -> np.ndarray:
        """Ground truth minus prediction, heading wrapped to (-pi, pi]."""
        pred = self.predict(model)
        err = self.end - pred
        err[:, 2] = wrap_angles(err[:, 2])
        return err


def _as_batch(segments) -> SegmentBatch:
    return segments if isinstance(segments, SegmentBatch) else SegmentBatch(segments)


def loss(model: KinematicModel, segments, cfg: LossConfig | None = None) -> float:
    """Sum over segments of the squared Mahalanobis final-pose error."""
    cfg = cfg or LossConfig()
    err = _as_batch(segments).residuals(model)
    value = float(np.einsum("ni,ij,nj->", err, cfg.information, err))
    return value if math.isfinite(value) else math.inf


# ----------------------------------------------------------- optimiser

@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def bounded_nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    max_evals: int = 2000,
    xtol: float = 1e-8,
    initial_step: np.ndarray | None = None,
) -> SimplexResult:
    """Nelder-Mead simplex search with every trial point projected onto the box.

    Stops when all vertices lie within ``xtol`` (infinity norm) of the best
    vertex, or after ``max_evals`` function evaluations.
    """
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    d = x0.size
    evals = 0

    def f(x):
        nonlocal evals
        evals += 1
        v = fun(x)
        return v if math.isfinite(v) else math.inf

    if initial_step is None:
        initial_step = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.00025)
    simplex = [x0]
    for k in range(d):
        v = x0.copy()
        step = initial_step[k]
        # step inward when the start sits on (or near) its upper bound
        v[k] = x0[k] + step if x0[k] + step <= upper[k] else x0[k] - step
        simplex.append(np.clip(v, lower, upper))
    simplex = np.array(simplex)
    values = np.array([f(v) for v in simplex])

    iterations = 0
    converged = False
    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if np.max(np.abs(simplex[1:] - simplex[0])) < xtol:
            converged = True
            break
        iterations += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = np.clip(centroid + (centroid - worst), lower, upper)
        fr = f(xr)
        if fr < values[0]:
            xe = np.clip(centroid + 2.0 * (centroid - worst), lower, upper)
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = np.clip(centroid + 0.5 * (xr - centroid), lower, upper)
            else:
                xc = np.clip(centroid + 0.5 * (worst - centroid), lower, upper)
            fc = f(xc)
            if fc < min(fr, values[-1]):
                simplex[-1], values[-1] = xc, fc
            else:
                for k in range(1, d + 1):
                    simplex[k] = simplex[0] + 0.5 * (simplex[k] - simplex[0])
                    values[k] = f(simplex[k])
    best = int(np.argmin(values))
    return SimplexResult(simplex[best].copy(), float(values[best]), iterations, evals, converged)


def search_box(variant: str, geometry: ChassisGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Finite box the multi-start design samples from (always inside the bounds)."""
    r, b = geometry.r, geometry.b
    boxes = {
        "ext-dd-sym": [(0.2, 1.0), (0.5 * b, 5.0 * b)],
        "ext-dd-asym": [(0.2, 1.0), (0.2, 1.0), (-3.0 * b, 3.0 * b),
                        (0.25 * b, 5.0 * b), (-5.0 * b, -0.25 * b)],
        "roc": [(0.2, 1.0), (-1.0, 10.0), (-0.5, 5.0)],
        "full-linear": [(0.0, r), (0.0, r), (-r / 2, r / 2), (-r / 2, r / 2),
                        (-2.0 * r / b, 0.0), (0.0, 2.0 * r / b)],
    }
    lo, hi = np.array(boxes[variant]).T
    return lo, hi


def calibrate(
    variant: str,
    geometry: ChassisGeometry,
    segments,
    cfg: LossConfig | None = None,
    opt: OptimizerConfig | None = None,
) -> CalibrationReport:
    """Fit ``variant`` to the training segments.

    Runs the bounded simplex from a nominal start (the ideal differential
    drive expressed in this variant) and from ``opt.n_starts`` Latin
    hypercube points; keeps the lowest loss, ties going to the earliest start.
    """
    cfg = cfg or LossConfig()
    opt = opt or OptimizerConfig()
    cls = variant_class(variant)
    if not cls.param_names:
        raise NothingToTrainError(f"{variant} has no trainable parameters")
    if len(segments) == 0:
        raise InvalidInputError("no training segments (all removed as outliers?)")
    batch = _as_batch(segments)
    template = cls(geometry)
    lower = np.array([lo for lo, _ in cls.bounds])
    upper = np.array([hi for _, hi in cls.bounds])
    info = cfg.information

    def objective(x: np.ndarray) -> float:
        err = batch.residuals(with_params(template, x))
        value = float(np.einsum("ni,ij,nj->", err, info, err))
        return value if math.isfinite(value) else math.inf

    starts = []
    if opt.include_nominal:
        starts.append(nominal_model(variant, geometry).params())
    if opt.n_starts > 0:
        lo, hi = search_box(variant, geometry)
        design = qmc.LatinHypercube(d=lo.size, seed=np.random.default_rng(opt.seed))
        starts.extend(qmc.scale(design.random(opt.n_starts), lo, hi))

    best: tuple[float, int] | None = None
    results = []
    start_losses = []
    total_evals = 0
    for i, x0 in enumerate(starts):
        start_losses.append(objective(np.asarray(x0)))
        res = bounded_nelder_mead(objective, x0, lower, upper, opt.max_evals, opt.xtol)
        total_evals += res.evaluations + 1
        results.append(res)
        log.debug("calibrate %s start %d: loss %.6g -> %.6g (%d evals)",
                  variant, i, start_losses[-1], res.fun, res.evaluations)
        if best is None or res.fun < best[0]:
            best = (res.fun, i)
    assert best is not None
    winner = results[best[1]]
    model = with_params(template, winner.x)
    log.info("calibrate %s: loss %.6g from start %d (converged=%s)",
             variant, winner.fun, best[1], winner.converged)
    return CalibrationReport(
        model=model,
        final_loss=winner.fun,
        iterations=winner.iterations,
        evaluations=total_evals,
        restarts_used=len(starts),
        converged=winner.converged,
        seed=opt.seed,
        start_losses=tuple(start_losses),
        best_start=best[1],
    )
