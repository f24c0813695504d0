# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Lifting 2D poses to absolute 3D poses."""

from abc import ABC, abstractmethod
from typing import Optional, Union

import numpy as np

from ..dataset import LiftingDataset
from ..exceptions import DomainError
from ..normalize import normalize_batch
from .network import LifterWeights, predict

ArrayLike = Union[float, np.ndarray]


class LiftingResult:
    """Lifted poses for a batch of N samples.

    The absolute root and pose are only known when the focal length is.
    """

    def __init__(
        self,
        relative: np.ndarray,
        canonical_depth: Optional[np.ndarray] = None,
        root: Optional[np.ndarray] = None,
        root_depth: Optional[np.ndarray] = None,
    ) -> None:
        self._relative = relative
        self._canonical_depth = canonical_depth
        self._root = root
        self._root_depth = root_depth

    @property
    def relative(self) -> np.ndarray:
        """return the root-relative poses in millimeters, shape (N, J, 3)"""
        return self._relative

    @property
    def canonical_depth(self) -> Optional[np.ndarray]:
        """return the canonical root depths in mm/px, if known"""
        return self._canonical_depth

    @property
    def root(self) -> Optional[np.ndarray]:
        """return the absolute root coordinates in millimeters, shape (N, 3), if known"""
        return self._root

    @property
    def root_depth(self) -> Optional[np.ndarray]:
        """return the absolute root depths R_z in millimeters, if known"""
        return self._root_depth

    @property
    def absolute(self) -> Optional[np.ndarray]:
        """return the camera-frame poses, shape (N, J, 3), if the root is known"""
        if self._root is None:
            return None
        return self._root[:, None, :] + self._relative

    def __len__(self) -> int:
        return self._relative.shape[0]


def _per_sample(value: ArrayLike, count: int, width: Optional[int] = None) -> np.ndarray:
    shape = (count,) if width is None else (count, width)
    return np.broadcast_to(np.asarray(value, dtype=np.float64), shape)


class PoseLifter(ABC):
    """Base class of 2D-to-3D lifters."""

    def __init__(self, joint_count: int, root_index: int = 0) -> None:
        self._joint_count = joint_count
        self._root_index = root_index

    @property
    def joint_count(self) -> int:
        """return the number of joints the lifter expects"""
        return self._joint_count

    @property
    def root_index(self) -> int:
        """return the root joint"""
        return self._root_index

    def lift(
        self,
        poses2d: np.ndarray,
        principal: np.ndarray,
        alpha: Optional[ArrayLike] = None,
    ) -> LiftingResult:
        """Lift 2D poses.

        Args:
            poses2d: 2D poses in image pixels, ``(N, J, 2)`` or ``(J, 2)``.
            principal: Principal point(s), ``(2,)`` or ``(N, 2)``.
            alpha: Focal length(s) in pixels. Without it only the canonical depth and
                the relative pose are returned.

        Returns:
            The lifted poses.

        Raises:
            DomainError: On a joint-count mismatch, a degenerate pose or a
                non-positive focal length.
        """
        poses2d = np.asarray(poses2d, dtype=np.float64)
        if poses2d.ndim == 2:
            poses2d = poses2d[None]
        if poses2d.ndim != 3 or poses2d.shape[1:] != (self._joint_count, 2):
            raise DomainError(
                f"Expected 2D poses of shape (N, {self._joint_count}, 2), got {poses2d.shape}."
            )
        count = poses2d.shape[0]
        principals = _per_sample(principal, count, 2)
        alphas = None if alpha is None else _per_sample(alpha, count)
        if alphas is not None and np.any(~(alphas > 0)):
            raise DomainError("Focal lengths must be positive.")
        return self._lift(poses2d, principals, alphas)

    @abstractmethod
    def _lift(
        self, poses2d: np.ndarray, principals: np.ndarray, alphas: Optional[np.ndarray]
    ) -> LiftingResult:
        raise NotImplementedError

    def _compose(
        self,
        poses2d: np.ndarray,
        principals: np.ndarray,
        alphas: Optional[np.ndarray],
        relative: np.ndarray,
        canonical_depth: Optional[np.ndarray],
        root_depth: Optional[np.ndarray] = None,
    ) -> LiftingResult:
        if canonical_depth is None and root_depth is not None and alphas is not None:
            canonical_depth = root_depth / alphas
        if canonical_depth is None or alphas is None:
            return LiftingResult(relative, canonical_depth, None, root_depth)
        root2d = poses2d[:, self._root_index]
        root = np.empty((poses2d.shape[0], 3))
        root[:, :2] = (root2d - principals) * canonical_depth[:, None]
        root[:, 2] = alphas * canonical_depth if root_depth is None else root_depth
        return LiftingResult(relative, canonical_depth, root, root[:, 2].copy())


class NetworkPoseLifter(PoseLifter):
    """Lifts with a trained network in eval mode."""

    def __init__(self, weights: LifterWeights) -> None:
        super().__init__(weights.config.joint_count, weights.config.root_index)
        self._weights = weights

    @property
    def weights(self) -> LifterWeights:
        """return the network weights"""
        return self._weights

    def _lift(
        self, poses2d: np.ndarray, principals: np.ndarray, alphas: Optional[np.ndarray]
    ) -> LiftingResult:
        config = self._weights.config
        inputs = normalize_batch(poses2d, principals, config.use_loc_scale)
        output = predict(inputs, self._weights)
        if config.use_canonical_depth:
            return self._compose(poses2d, principals, alphas, output.relative, output.depth.copy())
        root_depth = config.depth_scale * output.depth
        return self._compose(poses2d, principals, alphas, output.relative, None, root_depth)


class MeanPoseLifter(PoseLifter):
    """Predicts the training-set mean canonical depth and mean relative pose for every input."""

    def __init__(
        self, canonical_depth: float, relative: np.ndarray, root_index: int = 0
    ) -> None:
        relative = np.asarray(relative, dtype=np.float64)
        super().__init__(relative.shape[0], root_index)
        self._canonical_depth = float(canonical_depth)
        self._relative = relative

    @classmethod
    def fit(cls, dataset: LiftingDataset) -> "MeanPoseLifter":
        """Average the ground truth of a dataset."""
        if len(dataset) == 0:
            raise DomainError("Cannot fit a mean pose to an empty dataset.")
        return cls(
            float(np.mean(dataset.canonical_depths)),
            dataset.relative3d.mean(axis=0),
            dataset.root_index,
        )

    def _lift(
        self, poses2d: np.ndarray, principals: np.ndarray, alphas: Optional[np.ndarray]
    ) -> LiftingResult:
        count = poses2d.shape[0]
        relative = np.broadcast_to(self._relative, (count,) + self._relative.shape).copy()
        depth = np.full(count, self._canonical_depth)
        return self._compose(poses2d, principals, alphas, relative, depth)
