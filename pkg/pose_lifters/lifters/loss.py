# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

r"""L1 loss on root depth and root-relative pose.

Per sample the loss is :math:`|d - d^*| + \lambda \sum_i |\hat{P}_i - \hat{P}^*_i|`,
averaged over the batch. The pose term sums over all joint coordinates. The depth
target is the canonical depth :math:`R_z^* / \alpha`, or :math:`R_z^* / s` for a
network regressing metric depth in units of ``depth_scale`` s.
"""

from typing import Tuple, Union

import numpy as np

from ..exceptions import DomainError
from .config import LifterConfig
from .network import LifterOutput


def depth_targets(root_depths: np.ndarray, alphas: np.ndarray, config: LifterConfig) -> np.ndarray:
    """Return the regression target of the depth output."""
    root_depths = np.asarray(root_depths, dtype=np.float64)
    if config.use_canonical_depth:
        alphas = np.asarray(alphas, dtype=np.float64)
        if np.any(~(alphas > 0)):
            raise DomainError("Focal lengths must be positive.")
        return root_depths / alphas
    return root_depths / config.depth_scale


def relative_targets(relative3d: np.ndarray, root_index: int) -> np.ndarray:
    """Flatten root-relative poses ``(N, J, 3)`` to the ``(N, 3J-3)`` output layout."""
    relative3d = np.asarray(relative3d, dtype=np.float64)
    return np.delete(relative3d, root_index, axis=1).reshape(relative3d.shape[0], -1)


def loss_and_gradient(
    values: np.ndarray, target_depth: np.ndarray, target_relative: np.ndarray, lam: float
) -> Tuple[float, np.ndarray]:
    """Evaluate the batch loss and its gradient with respect to the raw outputs.

    Args:
        values: Network outputs, ``(N, 3J-2)``.
        target_depth: Depth targets, ``(N,)``.
        target_relative: Flattened relative targets, ``(N, 3J-3)``.
        lam: Weight of the pose term.

    Returns:
        The mean loss and its gradient (subgradient 0 at ties).
    """
    values = np.atleast_2d(values)
    count = values.shape[0]
    depth_residual = values[:, 0] - target_depth
    pose_residual = values[:, 1:] - target_relative
    per_sample = np.abs(depth_residual) + lam * np.abs(pose_residual).sum(axis=1)
    grad = np.empty_like(values)
    grad[:, 0] = np.sign(depth_residual) / count
    grad[:, 1:] = lam * np.sign(pose_residual) / count
    return float(per_sample.mean()), grad


def loss(
    pred: Union[LifterOutput, np.ndarray],
    gt_root_depth: np.ndarray,
    alpha: np.ndarray,
    gt_relative: np.ndarray,
    lam: float,
    root_index: int = 0,
) -> float:
    """Canonical-depth loss of predictions against ground truth.

    Args:
        pred: Network outputs.
        gt_root_depth: Ground truth root depths R_z* in millimeters, ``(N,)``.
        alpha: Focal lengths in pixels, ``(N,)`` or scalar.
        gt_relative: Ground truth root-relative poses, ``(N, J, 3)``.
        lam: Weight of the pose term.
        root_index: The root joint omitted from the output layout.

    Raises:
        DomainError: If a focal length is not positive.
    """
    values = pred.values if isinstance(pred, LifterOutput) else np.atleast_2d(pred)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=np.float64), values.shape[:1])
    if np.any(~(alpha > 0)):
        raise DomainError("Focal lengths must be positive.")
    target_depth = np.asarray(gt_root_depth, dtype=np.float64) / alpha
    target_relative = relative_targets(np.reshape(gt_relative, (values.shape[0], -1, 3)), root_index)
    return loss_and_gradient(values, target_depth, target_relative, lam)[0]
