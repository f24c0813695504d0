# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Array container of lifting samples shared by training, lifting and evaluation."""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import DomainError, FormatError
from .geometry import project
from .pose_file import PoseFile

logger = logging.getLogger(__name__)


class LiftingDataset:
    """Parallel arrays describing N samples of one skeleton.

    Every sample carries its 2D pose, principal point, focal length, ground truth
    root coordinates and ground truth root-relative pose.
    """

    def __init__(
        self,
        poses2d: np.ndarray,
        principals: np.ndarray,
        alphas: np.ndarray,
        roots: np.ndarray,
        relative3d: np.ndarray,
        root_index: int = 0,
        ids: Optional[Sequence[str]] = None,
        groups: Optional[Sequence[str]] = None,
    ) -> None:
        """
        Args:
            poses2d: 2D poses in image pixels, shape ``(N, J, 2)``.
            principals: Principal points, shape ``(N, 2)``.
            alphas: Focal lengths in pixels, shape ``(N,)``.
            roots: Absolute root coordinates in millimeters, shape ``(N, 3)``.
            relative3d: Root-relative poses in millimeters, shape ``(N, J, 3)``.
            root_index: The root joint shared by all samples.
            ids: Optional sample identifiers.
            groups: Optional action or sequence label per sample.

        Raises:
            DomainError: On inconsistent shapes or non-physical values.
        """
        self._poses2d = np.asarray(poses2d, dtype=np.float64)
        self._principals = np.asarray(principals, dtype=np.float64)
        self._alphas = np.asarray(alphas, dtype=np.float64)
        self._roots = np.asarray(roots, dtype=np.float64)
        self._relative3d = np.asarray(relative3d, dtype=np.float64)
        self._root_index = int(root_index)
        count = self._poses2d.shape[0] if self._poses2d.ndim == 3 else -1
        self._ids = [str(i) for i in range(count)] if ids is None else [str(i) for i in ids]
        self._groups = None if groups is None else [str(g) for g in groups]
        self._check_configuration()

    def _check_configuration(self) -> None:
        if self._poses2d.ndim != 3 or self._poses2d.shape[2] != 2:
            raise DomainError(f"2D poses must have shape (N, J, 2), got {self._poses2d.shape}.")
        count, joint_count = self._poses2d.shape[:2]
        expected = {
            "principals": (self._principals, (count, 2)),
            "alphas": (self._alphas, (count,)),
            "roots": (self._roots, (count, 3)),
            "relative3d": (self._relative3d, (count, joint_count, 3)),
        }
        for name, (array, shape) in expected.items():
            if array.shape != shape:
                raise DomainError(f"{name} must have shape {shape}, got {array.shape}.")
        if len(self._ids) != count:
            raise DomainError(f"Expected {count} ids, got {len(self._ids)}.")
        if self._groups is not None and len(self._groups) != count:
            raise DomainError(f"Expected {count} group labels, got {len(self._groups)}.")
        if not 0 <= self._root_index < joint_count:
            raise DomainError(f"Root index {self._root_index} out of range.")
        if np.any(~(self._alphas > 0)):
            raise DomainError("All focal lengths must be positive.")
        if np.any(~(self._roots[:, 2] > 0)):
            raise DomainError("All root depths must be positive.")
        if np.any(self._relative3d[:, self._root_index] != 0.0):
            raise DomainError("Relative poses must have a zero offset at the root joint.")

    @property
    def poses2d(self) -> np.ndarray:
        """return the 2D poses, shape (N, J, 2)"""
        return self._poses2d

    @property
    def principals(self) -> np.ndarray:
        """return the principal points, shape (N, 2)"""
        return self._principals

    @property
    def alphas(self) -> np.ndarray:
        """return the focal lengths in pixels"""
        return self._alphas

    @property
    def roots(self) -> np.ndarray:
        """return the ground truth root coordinates, shape (N, 3)"""
        return self._roots

    @property
    def root_depths(self) -> np.ndarray:
        """return the ground truth root depths R_z"""
        return self._roots[:, 2]

    @property
    def canonical_depths(self) -> np.ndarray:
        """return the ground truth canonical root depths R_z / alpha"""
        return self._roots[:, 2] / self._alphas

    @property
    def relative3d(self) -> np.ndarray:
        """return the ground truth root-relative poses, shape (N, J, 3)"""
        return self._relative3d

    @property
    def absolute3d(self) -> np.ndarray:
        """return the ground truth camera-frame poses, shape (N, J, 3)"""
        return self._roots[:, None, :] + self._relative3d

    @property
    def root_index(self) -> int:
        """return the root joint index"""
        return self._root_index

    @property
    def joint_count(self) -> int:
        """return the number of joints J"""
        return self._poses2d.shape[1]

    @property
    def ids(self) -> List[str]:
        """return the sample identifiers"""
        return self._ids

    @property
    def groups(self) -> Optional[List[str]]:
        """return the action or sequence label of every sample, if known"""
        return self._groups

    def __len__(self) -> int:
        return self._poses2d.shape[0]

    def subset(self, indices: Sequence[int]) -> "LiftingDataset":
        """Return the samples at ``indices``, in that order."""
        indices = np.asarray(indices, dtype=int)
        return LiftingDataset(
            self._poses2d[indices],
            self._principals[indices],
            self._alphas[indices],
            self._roots[indices],
            self._relative3d[indices],
            root_index=self._root_index,
            ids=[self._ids[i] for i in indices],
            groups=None if self._groups is None else [self._groups[i] for i in indices],
        )

    def with_poses2d(self, poses2d: np.ndarray) -> "LiftingDataset":
        """Return a copy whose 2D inputs are replaced, e.g. by perturbed detections."""
        return LiftingDataset(
            poses2d,
            self._principals,
            self._alphas,
            self._roots,
            self._relative3d,
            root_index=self._root_index,
            ids=self._ids,
            groups=self._groups,
        )

    @classmethod
    def from_pose_file(cls, pose_file: PoseFile) -> "LiftingDataset":
        """Build a dataset from pose file records carrying ``pose3d`` and ``camera``.

        Records without ``pose2d`` get the exact projection of their 3D pose.

        Raises:
            FormatError: If a record lacks its 3D pose or camera, or root indices differ.
        """
        if len(pose_file) == 0:
            raise FormatError("The pose file holds no records.")
        root_indices = set(pose_file.root_indices().tolist())
        if len(root_indices) != 1:
            raise FormatError(f"Records disagree on the root joint: {sorted(root_indices)}.")
        root_index = root_indices.pop()
        cameras = pose_file.cameras()
        poses3d = pose_file.stack("pose3d")
        poses2d = []
        for record, cam, pose3d in zip(pose_file.records, cameras, poses3d):
            poses2d.append(record.pose2d if record.pose2d is not None else project(pose3d, cam))
        roots = poses3d[:, root_index].copy()
        groups = [record.extras.get("action") for record in pose_file.records]
        return cls(
            np.stack(poses2d),
            np.array([cam.principal_point for cam in cameras]),
            np.array([cam.alpha for cam in cameras]),
            roots,
            poses3d - roots[:, None, :],
            root_index=root_index,
            ids=[record.id for record in pose_file.records],
            groups=None if any(g is None for g in groups) else groups,
        )
