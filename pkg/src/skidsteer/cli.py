"""Command-line pipeline: simulate -> calibrate -> evaluate -> analyze.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from skidsteer import plots
from skidsteer._io import atomic_write_text
from skidsteer.calibration import LossConfig, NothingToTrainError, OptimizerConfig, calibrate
from skidsteer.dataset import (
    DataError,
    load_command_log,
    load_pose_log,
    load_scenario,
    simulate,
    synchronize,
    write_command_log,
    write_pose_log,
)
from skidsteer.evaluation import (
    curve_csv,
    error_command_grid,
    evaluate,
    grid_csv,
    horizon_sweep,
    rotation_response,
    samples_csv,
    summarize_samples,
    summary_json,
    sweep_csv,
)
from skidsteer.geometry import InvalidInputError
from skidsteer.models import (
    VARIANTS,
    ChassisGeometry,
    IdealDD,
    InvalidParameterError,
    dumps_model,
    loads_model,
)
from skidsteer.segmentation import HorizonConfig, segment

log = logging.getLogger("skidsteer")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_horizon_flags(p, stride_default: str) -> None:
    p.add_argument("--mode", choices=("spatial", "temporal"), default="spatial")
    p.add_argument("--horizon", type=float, default=2.0, help="meters (spatial) or seconds")
    p.add_argument("--stride", choices=("non-overlapping", "sliding"), default=stride_default)
    p.add_argument("--zero-thresh", type=float, default=0.05, help="rad/s")
    p.add_argument("--zero-frac", type=float, default=0.5)


def _horizon(args, h: float | None = None, stride: str | None = None) -> HorizonConfig:
    try:
        return HorizonConfig(args.mode, args.horizon if h is None else h,
                             stride or args.stride, args.zero_thresh, args.zero_frac)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _optimizer(args) -> OptimizerConfig:
    return OptimizerConfig(seed=args.seed, n_starts=args.restarts, max_evals=args.max_evals)


def _add_optimizer_flags(p) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=16, help="space-filling starts")
    p.add_argument("--max-evals", type=int, default=2000, help="per start")
    p.add_argument("--sigma", type=float, nargs=3, metavar=("SXX", "SYY", "STT"),
                   help="diagonal loss weighting (default identity)")


def _loss_cfg(args) -> LossConfig:
    return LossConfig(np.diag(args.sigma)) if args.sigma else LossConfig()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skidsteer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate synthetic command/pose logs")
    p.add_argument("--scenario", required=True, type=Path, help="flat JSON scenario")
    p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("calibrate", help="fit a model on training logs")
    p.add_argument("--model", required=True, choices=sorted(VARIANTS))
    p.add_argument("--train", required=True, nargs=2, type=Path, metavar=("CMD_CSV", "POSE_CSV"))
    p.add_argument("--r", type=float, default=0.3, help="wheel radius [m]")
    p.add_argument("--b", type=float, default=1.2, help="vehicle width [m]")
    p.add_argument("--out", required=True, type=Path, help="model parameter file")
    _add_horizon_flags(p, "non-overlapping")
    _add_optimizer_flags(p)

    p = sub.add_parser("evaluate", help="per-meter errors of one or more models")
    p.add_argument("--model-file", required=True, action="append", type=Path)
    p.add_argument("--eval", required=True, nargs=2, type=Path, metavar=("CMD_CSV", "POSE_CSV"))
    p.add_argument("--out", required=True, type=Path, help="report directory")
    p.add_argument("--baseline", action="store_true",
                   help="also evaluate the ideal differential drive of the first model's geometry")
    p.add_argument("--bin-width", type=float, default=0.05, help="rotation bins [rad/m]")
    p.add_argument("--grid-res", type=int, default=20)
    p.add_argument("--no-plots", action="store_true")
    _add_horizon_flags(p, "sliding")

    p = sub.add_parser("analyze", help="training/evaluation horizon sweep")
    p.add_argument("--model", required=True, choices=sorted(VARIANTS))
    p.add_argument("--train", required=True, nargs=2, type=Path, metavar=("CMD_CSV", "POSE_CSV"))
    p.add_argument("--eval", required=True, nargs=2, type=Path, metavar=("CMD_CSV", "POSE_CSV"))
    p.add_argument("--train-horizons", type=float, nargs="+", default=[2.0, 5.0, 10.0])
    p.add_argument("--eval-horizons", type=float, nargs="+",
                   default=[0.25, 0.5, 1.0, 2.0, 5.0, 10.0])
    p.add_argument("--r", type=float, default=0.3)
    p.add_argument("--b", type=float, default=1.2)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--no-plots", action="store_true")
    _add_horizon_flags(p, "non-overlapping")
    _add_optimizer_flags(p)
    return parser


def _require(*paths: Path) -> None:
    for path in paths:
        if not path.is_file():
            raise FileNotFoundError(f"input file not found: {path}")


def _load_traj(cmd_path: Path, pose_path: Path):
    _require(cmd_path, pose_path)
    return synchronize(load_command_log(cmd_path), load_pose_log(pose_path))


def cmd_simulate(args) -> None:
    _require(args.scenario)
    scenario = load_scenario(args.scenario)
    cmds, poses = simulate(scenario)
    write_command_log(args.out / "cmd.csv", cmds)
    write_pose_log(args.out / "pose.csv", poses)
    atomic_write_text(args.out / "truth.model", dumps_model(scenario.true_model, "truth"))
    log.info("simulate: %d commands, %d poses -> %s", len(cmds), len(poses), args.out)


def cmd_calibrate(args) -> None:
    traj = _load_traj(*args.train)
    geometry = ChassisGeometry(args.r, args.b)
    segs = segment(traj, _horizon(args))
    log.info("calibrate: %d training segments", len(segs))
    report = calibrate(args.model, geometry, segs, _loss_cfg(args), _optimizer(args))
    meta = report.metadata() | {"segments": len(segs), "horizon": args.horizon, "mode": args.mode}
    atomic_write_text(args.out, dumps_model(report.model, args.model, meta))
    log.info("calibrate: final_loss=%.6g params=%s", report.final_loss,
             ",".join(f"{v:.6g}" for v in report.model.params()))


def cmd_evaluate(args) -> None:
    _require(*args.model_file)
    models = {}
    for path in args.model_file:
        # reports are named after the model file, so two fits of one variant stay apart
        base = name = path.stem
        k = 1
        while name in models:
            k += 1
            name = f"{base}-{k}"
        models[name] = loads_model(path.read_text(encoding="utf-8"))
    if args.baseline:
        models.setdefault("ideal-dd", IdealDD(next(iter(models.values())).geometry))
    traj = _load_traj(*args.eval)
    segs = segment(traj, _horizon(args))
    if not segs:
        raise DataError("no evaluation segments at this horizon")
    out: Path = args.out
    per_model, all_samples = {}, {}
    for name, model in models.items():
        samples = evaluate(model, segs)
        all_samples[name] = samples
        per_model[name] = summarize_samples(samples)
        atomic_write_text(out / f"samples_{name}.csv", samples_csv(samples))
        grid = error_command_grid(samples, args.grid_res)
        atomic_write_text(out / f"error_grid_{name}.csv", grid_csv(grid))
        if not args.no_plots:
            plots.error_grid(grid, out / f"error_grid_{name}.png")
        log.info("evaluate %s: median eps_t=%.4g eps_theta=%.4g over %d segments", name,
                 per_model[name]["eps_t"].median, per_model[name]["eps_theta"].median, len(samples))
    # rotation response depends on ground truth only; any model's samples carry it
    curve = rotation_response(next(iter(all_samples.values())), args.bin_width)
    atomic_write_text(out / "rotation_response.csv", curve_csv(curve))
    atomic_write_text(out / "summary.json", summary_json(
        per_model, {"horizon": args.horizon, "mode": args.mode, "segments": len(segs),
                    "rotation_axis": "ideal differential drive rotation per ground-truth meter"}))
    if not args.no_plots:
        plots.error_distributions(all_samples, out / "error_distributions.png")
        plots.rotation_response(curve, out / "rotation_response.png")


def cmd_analyze(args) -> None:
    train = _load_traj(*args.train)
    evaluation = _load_traj(*args.eval)
    result = horizon_sweep(args.model, ChassisGeometry(args.r, args.b), train, evaluation,
                           args.train_horizons, args.eval_horizons, _horizon(args),
                           _loss_cfg(args), _optimizer(args))
    atomic_write_text(args.out / f"sweep_{args.model}.csv", sweep_csv(result))
    if not args.no_plots:
        plots.horizon_sweep(result, args.out / f"sweep_{args.model}.png")


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="level=%(levelname)s logger=%(name)s msg=%(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except (DataError, InvalidInputError, InvalidParameterError, NothingToTrainError,
            json.JSONDecodeError, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
