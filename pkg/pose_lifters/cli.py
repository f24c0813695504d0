# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Command-line interface.

Sub-commands::

    fit-error   fit per-joint detection error models from predicted and true 2D poses
    synth       generate a synthetic pose file
    train       train a lifter network
    lift        lift 2D poses to canonical depth, relative and absolute 3D poses
    eval        compute MPJPE, PA-MPJPE, MRPE, 3DPCK and AUC
    plotdata    export error histograms or depth/scale scatter data as CSV

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dataset import LiftingDataset
from .error_models import (
    DEFAULT_SUPPORT,
    ErrorModelSet,
    fit_em,
    fit_single_gaussian,
    init_params,
    marginal_pdf,
    nll,
)
from .exceptions import DomainError, FormatError, NumericalError, UsageError
from .geometry import CameraIntrinsics, project
from .lifters import (
    LifterConfig,
    NetworkPoseLifter,
    TrainingSchedule,
    load_config,
    load_weights,
    save_weights,
    train,
)
from .metrics import DEFAULT_AUC_GRID, DEFAULT_PCK_THRESHOLD, METRIC_NAMES, evaluate
from .normalize import statistics
from .pose_file import PoseFile, PoseRecord, read_pose_file, write_pose_file
from .synth import DEFAULT_DEPTH_RANGE, SkeletonSpec, generate, to_pose_file

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV = "POSE_LIFTERS_LOG_LEVEL"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _ArgumentParser(argparse.ArgumentParser):
    """Argument parser that exits with the usage-error code."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str, count: Optional[int] = None) -> List[float]:
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from err
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"expected {count} numbers, got '{text}'")
    return values


def _pair(text: str) -> Tuple[float, float]:
    low, high = _floats(text, 2)
    return low, high


def _range(text: str) -> Tuple[float, float]:
    values = _floats(text)
    if len(values) == 1:
        return values[0], values[0]
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected a value or a 'low,high' range, got '{text}'")
    return values[0], values[1]


def _grid(text: str) -> np.ndarray:
    """Parse ``start:stop:step`` (inclusive) or a comma-separated list."""
    if ":" in text:
        try:
            start, stop, step = (float(part) for part in text.split(":"))
        except ValueError as err:
            raise argparse.ArgumentTypeError(f"expected start:stop:step, got '{text}'") from err
        if not step > 0 or stop < start:
            raise argparse.ArgumentTypeError(f"invalid grid '{text}'")
        return start + step * np.arange(int(np.floor((stop - start) / step + 1e-9)) + 1)
    return np.array(_floats(text))


def _poses2d(pose_file: PoseFile) -> np.ndarray:
    """Stack 2D poses, projecting the 3D pose of records without one."""
    poses = []
    for record in pose_file.records:
        if record.pose2d is not None:
            poses.append(record.pose2d)
        elif record.pose3d is not None and record.camera is not None:
            poses.append(project(record.pose3d, record.camera))
        else:
            raise FormatError(f"Record '{record.id}' has neither pose2d nor pose3d with camera.")
    if not poses:
        return np.zeros((0, pose_file.joint_count, 2))
    return np.stack(poses)


def _matched(pred_file: PoseFile, gt_file: PoseFile) -> List[PoseRecord]:
    """Return the predicted records in ground-truth order, matched by id."""
    if pred_file.joint_count != gt_file.joint_count:
        raise DomainError(
            f"Joint count mismatch: predictions have {pred_file.joint_count} joints, "
            f"ground truth has {gt_file.joint_count}."
        )
    by_id = pred_file.by_id()
    missing = [record.id for record in gt_file.records if record.id not in by_id]
    if missing:
        raise FormatError(f"{len(missing)} ground truth records have no prediction, e.g. '{missing[0]}'.")
    return [by_id[record.id] for record in gt_file.records]


def _errors(pred_path: str, gt_path: str) -> np.ndarray:
    pred_file, gt_file = read_pose_file(pred_path), read_pose_file(gt_path)
    pred = PoseFile(pred_file.joint_count, _matched(pred_file, gt_file))
    return _poses2d(pred) - _poses2d(gt_file)


def cmd_fit_error(args: argparse.Namespace) -> int:
    """Fit error models to ``pred - gt`` 2D errors and write them as JSON."""
    errors = _errors(args.pred, args.gt)
    models = ErrorModelSet.fit(
        errors, args.support, pooled=args.pooled, kind=args.kind, max_iters=args.max_iters, tol=args.tol
    )
    data = [errors.reshape(-1, 2)] if args.pooled else [errors[:, j] for j in range(errors.shape[1])]
    print("joint  gamma     mu_x      mu_y      sigma_x   sigma_y   nll_model      nll_gaussian")
    for joint, values in enumerate(data):
        params = models[joint]
        gaussian = fit_single_gaussian(values, args.support)
        label = "all" if args.pooled else str(joint)
        print(
            f"{label:<6} {params.gamma:<9.4f} {params.mu[0]:<9.3f} {params.mu[1]:<9.3f} "
            f"{params.sigma[0]:<9.3f} {params.sigma[1]:<9.3f} {nll(values, params):<14.6g} "
            f"{nll(values, gaussian):.6g}"
        )
    models.save(args.out)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic pose file."""
    spec = SkeletonSpec.load(args.skeleton) if args.skeleton else SkeletonSpec.default()
    samples = generate(
        spec,
        args.n,
        args.depth_range,
        args.alpha,
        np.random.default_rng(args.seed),
        frozen_posture=args.frozen_posture,
        principal=args.principal,
    )
    write_pose_file(args.out, to_pose_file(samples, spec.joint_names, spec.joint_count))
    logger.info("Wrote %d samples to %s", len(samples), args.out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Train a lifter and write its weights and loss log."""
    config, schedule = load_config(args.config) if args.config else (LifterConfig(), TrainingSchedule())
    data = LiftingDataset.from_pose_file(read_pose_file(args.data))
    overrides = {"joint_count": data.joint_count, "root_index": data.root_index}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.hidden_dim is not None:
        overrides["hidden_dim"] = args.hidden_dim
    if args.no_loc_scale:
        overrides["use_loc_scale"] = False
    if args.no_canonical_depth:
        overrides["use_canonical_depth"] = False
    config = config.replace(**overrides)
    if args.epochs is not None:
        schedule = schedule.replace(epochs=args.epochs)
    if args.batch_size is not None:
        schedule = schedule.replace(batch_size=args.batch_size)
    if args.flip:
        pairing = schedule.pairing
        if pairing is None:
            default = SkeletonSpec.default()
            if data.joint_count != default.joint_count:
                raise UsageError("--flip needs a pairing table in the config for this skeleton.")
            pairing = default.pairing
        schedule = schedule.replace(flip=True, pairing=pairing)

    error_models = ErrorModelSet.load(args.error_model) if args.error_model else None
    validation = LiftingDataset.from_pose_file(read_pose_file(args.val)) if args.val else None
    result = train(
        data, config, schedule, error_models, validation, show_progress=not args.no_progress
    )
    save_weights(result.weights, args.out)
    log_path = args.log or os.path.splitext(args.out)[0] + ".log.json"
    with open(log_path, "w", encoding="utf-8") as handle:
        json.dump(
            {
                "config": config.to_dict(),
                "schedule": schedule.to_dict(),
                "epoch_losses": result.epoch_losses,
                "learning_rates": result.learning_rates,
                "validation_history": result.validation_history,
            },
            handle,
            indent=2,
        )
        handle.write("\n")
    return EXIT_OK


def cmd_lift(args: argparse.Namespace) -> int:
    """Lift the 2D poses of a pose file."""
    weights = load_weights(args.weights)
    config = weights.config
    pose_file = read_pose_file(args.poses2d)
    if pose_file.joint_count != config.joint_count:
        raise DomainError(
            f"The pose file has {pose_file.joint_count} joints; the network expects "
            f"{config.joint_count}."
        )
    poses2d = _poses2d(pose_file)
    if args.record_cameras:
        cameras = pose_file.cameras()
        principals = np.array([cam.principal_point for cam in cameras]).reshape(-1, 2)
        alphas = np.array([cam.alpha for cam in cameras])
    else:
        if args.principal is not None:
            principal = np.array(args.principal)
        elif args.image_size is not None:
            principal = np.array(args.image_size) / 2.0
        else:
            raise UsageError("Give --principal, --image-size or --record-cameras.")
        principals = np.broadcast_to(principal, (len(pose_file), 2))
        alphas = None if args.alpha is None else np.full(len(pose_file), args.alpha)
    if alphas is None and not config.use_canonical_depth:
        raise UsageError("This network predicts metric depth; lifting it needs --alpha.")

    records = []
    if len(pose_file):
        result = NetworkPoseLifter(weights).lift(poses2d, principals, alphas)
        for i, source in enumerate(pose_file.records):
            record = PoseRecord(
                id=source.id,
                root_index=config.root_index,
                pose2d=poses2d[i],
                extras={
                    "canonical_depth": float(result.canonical_depth[i]),
                    "relative3d": result.relative[i],
                },
            )
            if alphas is not None:
                record.pose3d = result.absolute[i]
                record.camera = CameraIntrinsics(alphas[i], principals[i, 0], principals[i, 1])
            if "action" in source.extras:
                record.extras["action"] = source.extras["action"]
            records.append(record)
    write_pose_file(args.out, PoseFile(config.joint_count, records, pose_file.joint_names))
    logger.info("Lifted %d poses to %s", len(records), args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate predicted 3D poses against ground truth and write a JSON report."""
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRIC_NAMES]
    if unknown or not metrics:
        raise UsageError(f"Unknown metrics {unknown}; choose from {','.join(METRIC_NAMES)}.")
    pred_file, gt_file = read_pose_file(args.pred), read_pose_file(args.gt)
    pred = PoseFile(pred_file.joint_count, _matched(pred_file, gt_file))
    root_indices = set(gt_file.root_indices().tolist())
    if len(root_indices) > 1:
        raise FormatError(f"Ground truth records disagree on the root joint: {sorted(root_indices)}.")
    groups = [record.extras.get("action") for record in gt_file.records]
    report = evaluate(
        pred.stack("pose3d"),
        gt_file.stack("pose3d"),
        metrics=metrics,
        groups=None if any(g is None for g in groups) else groups,
        pck_threshold=args.pck_threshold,
        auc_grid=args.auc_grid,
        root_index=root_indices.pop() if root_indices else 0,
    )
    with open(args.report, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")
    for name, value in report["aggregate"].items():
        print(f"{name:<10} {value}")
    return EXIT_OK


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _error_histogram(args: argparse.Namespace) -> List[Tuple]:
    if not (args.pred and args.gt):
        raise UsageError("error-hist needs --pred and --gt.")
    errors = _errors(args.pred, args.gt)
    if args.model and args.joint is None:
        raise UsageError("--model needs --joint to select the joint's error model.")
    if args.joint is not None and not 0 <= args.joint < errors.shape[1]:
        raise UsageError(f"--joint must lie in [0, {errors.shape[1] - 1}], got {args.joint}.")
    if errors.shape[0] == 0:
        return []
    axis = "xy".index(args.axis)
    data = errors.reshape(-1, 2) if args.joint is None else errors[:, args.joint]
    if args.model:
        models = ErrorModelSet.load(args.model)
        if models.joint_count != errors.shape[1]:
            raise DomainError(
                f"The error model covers {models.joint_count} joints; the poses have {errors.shape[1]}."
            )
        mixture = models[args.joint]
    else:
        mixture = fit_em(data, init_params(data, args.support)).params
    gaussian = fit_single_gaussian(data, mixture.support)
    counts, edges = np.histogram(data[:, axis], bins=args.bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    gaussian_pdf = marginal_pdf(centers, gaussian, axis)
    mixture_pdf = marginal_pdf(centers, mixture, axis)
    return list(zip(centers.tolist(), counts.tolist(), gaussian_pdf.tolist(), mixture_pdf.tolist()))


def _depth_scatter(args: argparse.Namespace) -> List[Tuple]:
    if not args.poses:
        raise UsageError("depth-scatter needs --poses.")
    pose_file = read_pose_file(args.poses)
    rows = []
    for record, pose2d in zip(pose_file.records, _poses2d(pose_file)):
        if "canonical_depth" in record.extras:
            depth = float(record.extras["canonical_depth"])
        elif record.pose3d is not None and record.camera is not None:
            depth = float(record.pose3d[record.root_index, 2] / record.camera.alpha)
        else:
            raise FormatError(f"Record '{record.id}' has no canonical depth or 3D pose with camera.")
        rows.append((statistics(pose2d)[1], depth))
    return rows


def cmd_plotdata(args: argparse.Namespace) -> int:
    """Export plotting data as CSV."""
    if args.mode == "error-hist":
        header = ("bin", "count", "gaussian_pdf", "mixture_pdf")
        rows = _error_histogram(args)
    else:
        header = ("sigma", "canonical_depth")
        rows = _depth_scatter(args)
    _write_csv(args.out, header, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser of all sub-commands."""
    parser = _ArgumentParser(prog="pose-lifters", description=__doc__.split("\n")[0])
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging"
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    fit = commands.add_parser("fit-error", help="fit 2D detection error models")
    fit.add_argument("--pred", required=True, help="pose file of detected 2D poses")
    fit.add_argument("--gt", required=True, help="pose file of ground truth 2D (or 3D) poses")
    fit.add_argument("--support", type=float, default=DEFAULT_SUPPORT, help="uniform half-width, px")
    fit.add_argument("--kind", choices=("mixture", "gaussian"), default="mixture")
    fit.add_argument("--pooled", action="store_true", help="fit one model shared by all joints")
    fit.add_argument("--max-iters", type=int, default=200)
    fit.add_argument("--tol", type=float, default=1e-6)
    fit.add_argument("--out", required=True, help="error model JSON")
    fit.set_defaults(handler=cmd_fit_error)

    synth = commands.add_parser("synth", help="generate synthetic poses")
    synth.add_argument("--skeleton", help="skeleton JSON; defaults to the 17-joint skeleton")
    synth.add_argument("--spec", dest="skeleton", help=argparse.SUPPRESS)
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--depth-range", type=_pair, default=DEFAULT_DEPTH_RANGE, help="low,high mm")
    synth.add_argument("--alpha", type=_range, default=(1000.0, 1000.0), help="px or low,high")
    synth.add_argument("--principal", type=_pair, default=(512.0, 512.0), help="cx,cy px")
    synth.add_argument("--frozen-posture", action="store_true")
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=cmd_synth)

    fit_net = commands.add_parser("train", help="train a lifter network")
    fit_net.add_argument("--data", required=True, help="training pose file with pose3d and camera")
    fit_net.add_argument("--val", help="validation pose file")
    fit_net.add_argument("--config", help="JSON with 'lifter' and 'schedule' sections")
    fit_net.add_argument("--error-model", help="error model JSON used to perturb 2D inputs")
    fit_net.add_argument("--epochs", type=int)
    fit_net.add_argument("--batch-size", type=int)
    fit_net.add_argument("--seed", type=int)
    fit_net.add_argument("--hidden-dim", type=int)
    fit_net.add_argument("--no-loc-scale", action="store_true")
    fit_net.add_argument("--no-canonical-depth", action="store_true")
    fit_net.add_argument("--flip", action="store_true", help="random horizontal flips")
    fit_net.add_argument("--no-progress", action="store_true")
    fit_net.add_argument("--log", help="loss log JSON; defaults next to --out")
    fit_net.add_argument("--out", required=True, help="weight file")
    fit_net.set_defaults(handler=cmd_train)

    lift = commands.add_parser("lift", help="lift 2D poses to 3D")
    lift.add_argument("--weights", required=True)
    lift.add_argument("--poses2d", required=True)
    where = lift.add_mutually_exclusive_group()
    where.add_argument("--principal", type=_pair, help="cx,cy px")
    where.add_argument("--image-size", type=_pair, help="W,H px; principal point at the center")
    where.add_argument("--record-cameras", action="store_true", help="use each record's camera")
    lift.add_argument("--alpha", type=float, help="focal length px")
    lift.add_argument("--out", required=True)
    lift.set_defaults(handler=cmd_lift)

    ev = commands.add_parser("eval", help="evaluate 3D predictions")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--metrics", default=",".join(METRIC_NAMES))
    ev.add_argument("--pck-threshold", type=float, default=DEFAULT_PCK_THRESHOLD)
    ev.add_argument("--auc-grid", type=_grid, default=DEFAULT_AUC_GRID, help="start:stop:step or list")
    ev.add_argument("--report", required=True)
    ev.set_defaults(handler=cmd_eval)

    plot = commands.add_parser("plotdata", help="export CSV data for plots")
    plot.add_argument("--mode", choices=("error-hist", "depth-scatter"), required=True)
    plot.add_argument("--pred")
    plot.add_argument("--gt")
    plot.add_argument("--model", help="error model JSON for the mixture column")
    plot.add_argument("--joint", type=int)
    plot.add_argument("--axis", choices=("x", "y"), default="x")
    plot.add_argument("--bins", type=int, default=50)
    plot.add_argument("--support", type=float, default=DEFAULT_SUPPORT)
    plot.add_argument("--poses", help="pose file for depth-scatter")
    plot.add_argument("--out", required=True)
    plot.set_defaults(handler=cmd_plotdata)
    return parser


def _configure_logging(verbosity: int) -> None:
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = getattr(logging, os.environ.get(LOG_LEVEL_ENV, "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    _configure_logging(args.verbose)
    try:
        return args.handler(args)
    except UsageError as err:
        logger.error("%s", err)
        return EXIT_USAGE
    except NumericalError as err:
        logger.error("%s (epoch %s)", err, err.epoch)
        return EXIT_NUMERIC
    except (DomainError, OSError) as err:
        logger.error("%s", err)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
