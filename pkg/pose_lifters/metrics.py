# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""3D pose evaluation metrics: MPJPE, PA-MPJPE, MRPE, 3DPCK and AUC.

Every pose metric accepts a :class:`~pose_lifters.geometry.Pose3D`, a ``(J, 3)``
array or a ``(N, J, 3)`` batch, and averages over all samples and joints.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .exceptions import DomainError
from .geometry import Pose3D

logger = logging.getLogger(__name__)

PoseLike = Union[Pose3D, np.ndarray]

DEFAULT_PCK_THRESHOLD = 150.0
DEFAULT_AUC_GRID = 5.0 * np.arange(1, 31)
METRIC_NAMES = ("mpjpe", "pa_mpjpe", "mrpe", "pck", "auc")


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """The map ``x -> scale * rotation @ x + translation``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.array(self.rotation, dtype=np.float64)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        if rotation.shape != (3, 3):
            raise DomainError(f"Rotation must be 3x3, got {rotation.shape}.")
        if not np.allclose(rotation.T @ rotation, np.eye(3), rtol=0.0, atol=1e-9):
            raise DomainError("Rotation matrix is not orthogonal.")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise DomainError("Rotation matrix must have determinant +1.")
        if not self.scale > 0:
            raise DomainError(f"Similarity scale must be positive, got {self.scale}.")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape ``(..., 3)``."""
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def _as_batch(pose: PoseLike) -> Tuple[np.ndarray, Optional[int]]:
    if isinstance(pose, Pose3D):
        return pose.joints[None], pose.root_index
    joints = np.asarray(pose, dtype=np.float64)
    if joints.ndim == 2:
        joints = joints[None]
    if joints.ndim != 3 or joints.shape[2] != 3:
        raise DomainError(f"Poses must have shape (J, 3) or (N, J, 3), got {joints.shape}.")
    return joints, None


def _pair(pred: PoseLike, gt: PoseLike, root_index: Optional[int]) -> Tuple[np.ndarray, np.ndarray, int]:
    pred_joints, pred_root = _as_batch(pred)
    gt_joints, gt_root = _as_batch(gt)
    if pred_joints.shape != gt_joints.shape:
        raise DomainError(
            f"Prediction shape {pred_joints.shape} does not match ground truth {gt_joints.shape}."
        )
    roots = {r for r in (pred_root, gt_root, root_index) if r is not None}
    if len(roots) > 1:
        raise DomainError(f"Prediction and ground truth disagree on the root joint: {sorted(roots)}.")
    root = roots.pop() if roots else 0
    if not 0 <= root < pred_joints.shape[1]:
        raise DomainError(f"Root index {root} out of range.")
    return pred_joints, gt_joints, root


def joint_errors(pred: PoseLike, gt: PoseLike, root_index: Optional[int] = None) -> np.ndarray:
    """Return the per-joint distances after root alignment, shape ``(N, J)``."""
    pred_joints, gt_joints, root = _pair(pred, gt, root_index)
    pred_rel = pred_joints - pred_joints[:, root : root + 1]
    gt_rel = gt_joints - gt_joints[:, root : root + 1]
    return np.linalg.norm(pred_rel - gt_rel, axis=-1)


def mpjpe(pred: PoseLike, gt: PoseLike, root_index: Optional[int] = None) -> float:
    """Mean per joint position error in millimeters after aligning the roots.

    The root joint is included in the mean and contributes zero.

    Raises:
        DomainError: If joint counts or root joints differ.
    """
    return float(np.mean(joint_errors(pred, gt, root_index)))


def procrustes_align(
    pred: PoseLike, gt: PoseLike, with_scale: bool = True
) -> Tuple[SimilarityTransform, np.ndarray]:
    """Find the least-squares similarity transform from ``pred`` onto ``gt``.

    Args:
        pred: A single pose, ``(J, 3)``.
        gt: The target pose, ``(J, 3)``.
        with_scale: Solve for the scale; ``False`` restricts to rigid motions.

    Returns:
        The transform and the aligned prediction.

    Raises:
        DomainError: If fewer than three joints are given or either point set is
            collinear.
    """
    pred_joints, gt_joints, _ = _pair(pred, gt, None)
    if pred_joints.shape[0] != 1:
        raise DomainError("procrustes_align takes one pose pair; use pa_mpjpe for batches.")
    x, y = pred_joints[0], gt_joints[0]
    if x.shape[0] < 3:
        raise DomainError("Procrustes alignment needs at least three joints.")
    mu_x, mu_y = x.mean(axis=0), y.mean(axis=0)
    x0, y0 = x - mu_x, y - mu_y
    for name, points in (("prediction", x0), ("ground truth", y0)):
        singular = linalg.svd(points, compute_uv=False)
        if not singular[1] > 1e-9 * max(singular[0], 1.0):
            raise DomainError(f"Degenerate {name}: joints are collinear or coincide.")

    u, s, vt = linalg.svd(x0.T @ y0)
    d = np.sign(linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d])
    rotation = vt.T @ correction @ u.T
    scale = float(np.sum(s * np.diag(correction)) / np.sum(x0**2)) if with_scale else 1.0
    translation = mu_y - scale * rotation @ mu_x
    transform = SimilarityTransform(scale=scale, rotation=rotation, translation=translation)
    return transform, transform.apply(x)


def pa_mpjpe(pred: PoseLike, gt: PoseLike, with_scale: bool = True) -> float:
    """Mean per joint position error after Procrustes alignment of each pose pair.

    Raises:
        DomainError: On shape mismatch or degenerate poses.
    """
    pred_joints, gt_joints, _ = _pair(pred, gt, None)
    errors = []
    for x, y in zip(pred_joints, gt_joints):
        _, aligned = procrustes_align(x, y, with_scale=with_scale)
        errors.append(np.linalg.norm(aligned - y, axis=-1))
    return float(np.mean(errors))


def mrpe(pred_roots: np.ndarray, gt_roots: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean root position error.

    Args:
        pred_roots: Predicted absolute roots, ``(N, 3)`` or ``(3,)``.
        gt_roots: Ground truth roots of the same shape.

    Returns:
        The mean Euclidean root error and the mean absolute error per axis (x, y, z).

    Raises:
        DomainError: If the inputs differ in length or are empty.
    """
    pred_roots = np.atleast_2d(np.asarray(pred_roots, dtype=np.float64))
    gt_roots = np.atleast_2d(np.asarray(gt_roots, dtype=np.float64))
    if pred_roots.shape != gt_roots.shape or pred_roots.shape[-1] != 3:
        raise DomainError(
            f"Root arrays must both have shape (N, 3), got {pred_roots.shape} and {gt_roots.shape}."
        )
    if pred_roots.shape[0] == 0:
        raise DomainError("MRPE of zero samples is undefined.")
    delta = pred_roots - gt_roots
    return float(np.mean(np.linalg.norm(delta, axis=-1))), np.mean(np.abs(delta), axis=0)


def pck3d(
    pred: PoseLike,
    gt: PoseLike,
    threshold: float = DEFAULT_PCK_THRESHOLD,
    root_index: Optional[int] = None,
) -> float:
    """Fraction of joints closer than ``threshold`` millimeters after root alignment.

    The comparison is strict, so a joint exactly at the threshold is incorrect.
    """
    return float(np.mean(joint_errors(pred, gt, root_index) < threshold))


def auc(
    pred: PoseLike,
    gt: PoseLike,
    thresholds: Sequence[float] = DEFAULT_AUC_GRID,
    root_index: Optional[int] = None,
) -> float:
    """Mean 3DPCK over a grid of thresholds.

    Raises:
        DomainError: If the grid is empty.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    if thresholds.size == 0:
        raise DomainError("AUC needs at least one threshold.")
    errors = joint_errors(pred, gt, root_index)
    return float(np.mean([np.mean(errors < t) for t in thresholds]))


def _summary(
    pred: np.ndarray,
    gt: np.ndarray,
    metrics: Sequence[str],
    root_index: int,
    pck_threshold: float,
    auc_grid: np.ndarray,
) -> Dict[str, float]:
    summary: Dict[str, float] = {"count": int(pred.shape[0])}
    if "mpjpe" in metrics:
        summary["mpjpe"] = mpjpe(pred, gt, root_index)
    if "pa_mpjpe" in metrics:
        summary["pa_mpjpe"] = pa_mpjpe(pred, gt)
    if "mrpe" in metrics:
        total, per_axis = mrpe(pred[:, root_index], gt[:, root_index])
        summary["mrpe"] = total
        summary.update({f"mrpe_{axis}": float(v) for axis, v in zip("xyz", per_axis)})
    if "pck" in metrics:
        summary["pck"] = pck3d(pred, gt, pck_threshold, root_index)
    if "auc" in metrics:
        summary["auc"] = auc(pred, gt, auc_grid, root_index)
    return summary


def evaluate(
    pred: np.ndarray,
    gt: np.ndarray,
    metrics: Sequence[str] = METRIC_NAMES,
    groups: Optional[Sequence[str]] = None,
    pck_threshold: float = DEFAULT_PCK_THRESHOLD,
    auc_grid: Sequence[float] = DEFAULT_AUC_GRID,
    root_index: int = 0,
) -> Dict:
    """Build a JSON-ready metric report.

    Args:
        pred: Predicted absolute poses, ``(N, J, 3)``.
        gt: Ground truth absolute poses, ``(N, J, 3)``.
        metrics: Names from ``mpjpe``, ``pa_mpjpe``, ``mrpe``, ``pck`` and ``auc``.
        groups: Optional action or sequence label per sample for a breakdown.
        pck_threshold: The 3DPCK threshold in millimeters.
        auc_grid: The AUC thresholds in millimeters.
        root_index: The root joint.

    Returns:
        ``{"metrics", "pck_threshold", "auc_grid", "aggregate", "groups"}``.

    Raises:
        DomainError: On unknown metric names or mismatched inputs.
    """
    unknown = [m for m in metrics if m not in METRIC_NAMES]
    if unknown:
        raise DomainError(f"Unknown metrics {unknown}; choose from {list(METRIC_NAMES)}.")
    pred, gt, root_index = _pair(pred, gt, root_index)
    if pred.shape[0] == 0:
        raise DomainError("Cannot evaluate zero samples.")
    grid = np.asarray(auc_grid, dtype=np.float64).reshape(-1)
    report: Dict = {
        "metrics": list(metrics),
        "pck_threshold": float(pck_threshold),
        "auc_grid": grid.tolist(),
        "aggregate": _summary(pred, gt, metrics, root_index, pck_threshold, grid),
        "groups": {},
    }
    if groups is not None:
        if len(groups) != pred.shape[0]:
            raise DomainError(f"Expected {pred.shape[0]} group labels, got {len(groups)}.")
        labels: List[str] = sorted(set(groups))
        for label in labels:
            index = np.array([g == label for g in groups])
            report["groups"][label] = _summary(
                pred[index], gt[index], metrics, root_index, pck_threshold, grid
            )
    logger.info("Evaluated %d samples: %s", pred.shape[0], report["aggregate"])
    return report
