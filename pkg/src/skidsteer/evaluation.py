"""Per-meter odometry error metrics and the analyses built on them.

Reports are plain CSV/JSON; figures are rendered separately by
:mod:`skidsteer.plots`.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from skidsteer._io import atomic_write_text, fmt
from skidsteer.calibration import (
    LossConfig,
    OptimizerConfig,
    SegmentBatch,
    calibrate,
)
from skidsteer.dataset import SyncedTrajectory
from skidsteer.geometry import InvalidInputError, wrap_angles
from skidsteer.models import ChassisGeometry, IdealDD, KinematicModel, variant_class
from skidsteer.segmentation import HorizonConfig, Segment, segment

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ErrorSample:
    start_time: float
    eps_t: float
    eps_theta: float
    path_length: float
    duration: float
    mean_omega_l: float
    mean_omega_r: float
    wheel_speed_difference: float
    commanded_rotation_per_meter: float
    measured_rotation_per_meter: float


@dataclass(frozen=True)
class DistributionSummary:
    median: float
    q25: float
    q75: float
    count: int

    @property
    def iqr(self) -> float:
        return self.q75 - self.q25


def evaluate(model: KinematicModel, segments: Sequence[Segment]) -> list[ErrorSample]:
    """Relative translational (m/m) and angular (rad/m) final-pose errors per segment.

    Commanded rotation uses the ideal differential drive of the model's
    geometry applied to the window's mean wheel speeds; measured rotation is
    the ground-truth heading change.  Both are divided by the ground-truth
    path length.
    """
    if len(segments) == 0:
        raise InvalidInputError("no evaluation segments")
    batch = SegmentBatch(segments)
    pred = batch.predict(model)
    dxy = np.hypot(batch.end[:, 0] - pred[:, 0], batch.end[:, 1] - pred[:, 1])
    dth = np.abs(wrap_angles(batch.end[:, 2] - pred[:, 2]))
    r, b = model.geometry.r, model.geometry.b
    samples = []
    for k, seg in enumerate(segments):
        length = seg.path_length
        if not length > 0:
            raise InvalidInputError(f"segment at t={seg.t[0]:.3f} has zero path length")
        wl, wr = seg.mean_omega_l, seg.mean_omega_r
        samples.append(ErrorSample(
            start_time=float(seg.t[0]),
            eps_t=float(dxy[k] / length),
            eps_theta=float(dth[k] / length),
            path_length=length,
            duration=seg.duration,
            mean_omega_l=wl,
            mean_omega_r=wr,
            wheel_speed_difference=wr - wl,
            commanded_rotation_per_meter=r * (wr - wl) / b * seg.duration / length,
            measured_rotation_per_meter=seg.heading_change / length,
        ))
    samples.sort(key=lambda s: s.start_time)
    return samples


def summarize(values: Sequence[float]) -> DistributionSummary:
    """Median and quartiles with linear interpolation between order statistics."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise InvalidInputError("cannot summarise an empty sample")
    q25, med, q75 = np.quantile(arr, [0.25, 0.5, 0.75])
    return DistributionSummary(float(med), float(q25), float(q75), int(arr.size))


def summarize_samples(samples: Sequence[ErrorSample]) -> dict[str, DistributionSummary]:
    return {
        "eps_t": summarize([s.eps_t for s in samples]),
        "eps_theta": summarize([s.eps_theta for s in samples]),
    }


# ---------------------------------------------------------- horizon sweep

@dataclass(frozen=True, eq=False)
class SweepResult:
    variant: str
    train_horizons: tuple[float, ...]
    eval_horizons: tuple[float, ...]
    median: np.ndarray  # (len(train), len(eval)) of eps_t medians
    iqr: np.ndarray
    count: np.ndarray
    models: tuple[KinematicModel, ...]


def horizon_sweep(
    variant: str,
    geometry: ChassisGeometry,
    traj_train: SyncedTrajectory,
    traj_eval: SyncedTrajectory,
    train_horizons: Sequence[float],
    eval_horizons: Sequence[float],
    base: HorizonConfig | None = None,
    loss_cfg: LossConfig | None = None,
    opt: OptimizerConfig | None = None,
) -> SweepResult:
    """Train at every ``h_t`` and evaluate eps_t at every ``h_e``.

    Training windows are spatial/temporal per ``base.mode`` and never overlap;
    evaluation windows slide.  Cells with no evaluation windows hold NaN.
    """
    if not train_horizons or not eval_horizons:
        raise InvalidInputError("horizon lists must be non-empty")
    base = base or HorizonConfig()
    shape = (len(train_horizons), len(eval_horizons))
    median = np.full(shape, np.nan)
    iqr = np.full(shape, np.nan)
    counts = np.zeros(shape, dtype=int)
    eval_sets = [
        segment(traj_eval, HorizonConfig(base.mode, h, "sliding",
                                         base.zero_command_threshold, base.zero_command_fraction))
        for h in eval_horizons
    ]
    trainable = bool(variant_class(variant).param_names)
    models = []
    for i, h_t in enumerate(train_horizons):
        if trainable:
            train = segment(traj_train, HorizonConfig(base.mode, h_t, "non-overlapping",
                                                      base.zero_command_threshold,
                                                      base.zero_command_fraction))
            model = calibrate(variant, geometry, train, loss_cfg, opt).model
        else:
            model = IdealDD(geometry)
        models.append(model)
        for j, segs in enumerate(eval_sets):
            if not segs:
                continue
            s = summarize([e.eps_t for e in evaluate(model, segs)])
            median[i, j], iqr[i, j], counts[i, j] = s.median, s.iqr, s.count
        log.info("sweep %s h_t=%g done", variant, h_t)
    return SweepResult(variant, tuple(map(float, train_horizons)), tuple(map(float, eval_horizons)),
                       median, iqr, counts, tuple(models))


# ------------------------------------------------------ rotation response

@dataclass(frozen=True, eq=False)
class RotationCurve:
    """Measured vs commanded rotation per meter, binned on the commanded axis.

    Only non-empty bins are kept; ``centers`` and ``summaries`` align.
    Magnitudes are used on both axes.
    """

    bin_width: float
    centers: np.ndarray
    summaries: tuple[DistributionSummary, ...]

    @property
    def medians(self) -> np.ndarray:
        return np.array([s.median for s in self.summaries])


def rotation_response(
    samples: Sequence[ErrorSample], bin_width: float = 0.05, max_commanded: float | None = None
) -> RotationCurve:
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    cmd = np.abs([s.commanded_rotation_per_meter for s in samples]).astype(float)
    meas = np.abs([s.measured_rotation_per_meter for s in samples]).astype(float)
    if max_commanded is not None:
        keep = cmd <= max_commanded
        cmd, meas = cmd[keep], meas[keep]
    if cmd.size == 0:
        return RotationCurve(bin_width, np.empty(0), ())
    idx = np.floor(cmd / bin_width).astype(int)
    centers, summaries = [], []
    for k in np.unique(idx):
        centers.append((k + 0.5) * bin_width)
        summaries.append(summarize(meas[idx == k]))
    return RotationCurve(bin_width, np.array(centers), tuple(summaries))


@dataclass(frozen=True)
class KneeFit:
    knee: float
    slope_below: float
    slope_above: float


def fit_knee(curve: RotationCurve, resolution: int = 400) -> KneeFit:
    """Least-squares two-piece line through the origin fitted to the bin medians.

    The knee is searched on a grid spanning the populated commanded range;
    bins are weighted by their sample counts.
    """
    x = curve.centers
    y = curve.medians
    w = np.array([s.count for s in curve.summaries], dtype=float)
    if x.size < 3:
        raise InvalidInputError("need at least 3 populated bins to locate a knee")
    best = None
    for k in np.linspace(x[0], x[-1], resolution)[1:-1]:
        # basis: min(x, k) and max(x - k, 0); continuous at the knee
        basis = np.column_stack([np.minimum(x, k), np.maximum(x - k, 0.0)])
        sw = np.sqrt(w)[:, None]
        coef, *_ = np.linalg.lstsq(basis * sw, y * sw[:, 0], rcond=None)
        sse = float(np.sum(w * (basis @ coef - y) ** 2))
        if best is None or sse < best[0]:
            best = (sse, k, coef)
    _, k, coef = best
    return KneeFit(float(k), float(coef[0]), float(coef[1]))


# -------------------------------------------------------- error grid

@dataclass(frozen=True, eq=False)
class ErrorGrid:
    """Median eps_theta over a ``resolution × resolution`` grid of mean wheel speeds.

    Rows index mean omega_l, columns mean omega_r; empty cells are NaN.
    """

    edges_l: np.ndarray
    edges_r: np.ndarray
    median: np.ndarray
    count: np.ndarray


def error_command_grid(
    samples: Sequence[ErrorSample],
    resolution: int = 20,
    box: tuple[float, float, float, float] | None = None,
) -> ErrorGrid:
    """Bin samples by (mean omega_l, mean omega_r); ``box`` is (l_min, l_max, r_min, r_max)."""
    if len(samples) == 0:
        raise InvalidInputError("no samples to grid")
    wl = np.array([s.mean_omega_l for s in samples])
    wr = np.array([s.mean_omega_r for s in samples])
    err = np.array([s.eps_theta for s in samples])
    if box is None:
        box = (wl.min(), wl.max(), wr.min(), wr.max())
    lo_l, hi_l, lo_r, hi_r = box
    if hi_l <= lo_l:
        hi_l = lo_l + 1.0
    if hi_r <= lo_r:
        hi_r = lo_r + 1.0
    edges_l = np.linspace(lo_l, hi_l, resolution + 1)
    edges_r = np.linspace(lo_r, hi_r, resolution + 1)
    il = np.clip(np.searchsorted(edges_l, wl, side="right") - 1, 0, resolution - 1)
    ir = np.clip(np.searchsorted(edges_r, wr, side="right") - 1, 0, resolution - 1)
    inside = (wl >= lo_l) & (wl <= hi_l) & (wr >= lo_r) & (wr <= hi_r)
    median = np.full((resolution, resolution), np.nan)
    count = np.zeros((resolution, resolution), dtype=int)
    cell = il * resolution + ir
    for c in np.unique(cell[inside]):
        vals = err[inside & (cell == c)]
        i, j = divmod(int(c), resolution)
        median[i, j] = float(np.median(vals))
        count[i, j] = vals.size
    return ErrorGrid(edges_l, edges_r, median, count)


# ------------------------------------------------------------ reports

def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else fmt(v) for v in row) + "\n")
    return buf.getvalue()


SAMPLE_COLUMNS = tuple(f.name for f in fields(ErrorSample))


def samples_csv(samples: Sequence[ErrorSample]) -> str:
    return _csv(SAMPLE_COLUMNS, ([getattr(s, c) for c in SAMPLE_COLUMNS] for s in samples))


def curve_csv(curve: RotationCurve) -> str:
    return _csv(
        ("commanded_rad_per_m", "median", "q25", "q75", "count"),
        ([c, s.median, s.q25, s.q75, str(s.count)] for c, s in zip(curve.centers, curve.summaries)),
    )


def grid_csv(grid: ErrorGrid) -> str:
    rows = []
    n = grid.median.shape[0]
    for i in range(n):
        for j in range(n):
            rows.append([
                grid.edges_l[i], grid.edges_l[i + 1], grid.edges_r[j], grid.edges_r[j + 1],
                str(int(grid.count[i, j])),
                "" if math.isnan(grid.median[i, j]) else grid.median[i, j],
            ])
    return _csv(("omega_l_lo", "omega_l_hi", "omega_r_lo", "omega_r_hi", "count",
                 "median_eps_theta"), rows)


def sweep_csv(result: SweepResult) -> str:
    rows = []
    for i, h_t in enumerate(result.train_horizons):
        for j, h_e in enumerate(result.eval_horizons):
            med, iqr = result.median[i, j], result.iqr[i, j]
            rows.append([h_t, h_e, "" if math.isnan(med) else med,
                         "" if math.isnan(iqr) else iqr, str(int(result.count[i, j]))])
    return _csv(("h_t", "h_e", "median_eps_t", "iqr_eps_t", "count"), rows)


def summary_json(per_model: dict[str, dict[str, DistributionSummary]], extra: dict | None = None) -> str:
    doc = {
        "models": {
            name: {metric: asdict(s) | {"iqr": s.iqr} for metric, s in metrics.items()}
            for name, metrics in per_model.items()
        }
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(path, text: str):
    return atomic_write_text(path, text)
