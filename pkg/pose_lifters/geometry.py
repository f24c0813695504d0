# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Pinhole projection, canonical root depth and absolute/relative pose composition.

Units: camera coordinates are in millimeters, image coordinates in pixels and the
canonical root depth in millimeters per pixel.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True)
class CameraIntrinsics:
    """Square-pixel pinhole intrinsics.

    ``alpha`` is the focal length in pixels, i.e. the product of the physical focal
    length and the pixel density. Only the product enters any computation here.
    """

    alpha: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        for name in ("alpha", "cx", "cy"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise DomainError(f"Camera {name} must be finite, got {value}.")
            object.__setattr__(self, name, value)
        if self.alpha <= 0:
            raise DomainError(f"Focal length alpha must be positive, got {self.alpha}.")

    @property
    def principal_point(self) -> np.ndarray:
        """Return the principal point (c_x, c_y) in pixels."""
        return np.array([self.cx, self.cy])

    @classmethod
    def from_image_size(cls, width: float, height: float, alpha: float) -> "CameraIntrinsics":
        """Build intrinsics whose principal point is the image center.

        Args:
            width: Image width in pixels.
            height: Image height in pixels.
            alpha: Focal length in pixels.

        Returns:
            The camera intrinsics.
        """
        return cls(alpha=alpha, cx=width / 2.0, cy=height / 2.0)


@dataclass(frozen=True, eq=False)
class Pose3D:
    """An ordered set of J joints in the camera coordinate system (mm)."""

    joints: np.ndarray
    root_index: int = 0

    def __post_init__(self) -> None:
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 3:
            raise DomainError(f"3D pose joints must have shape (J, 3), got {joints.shape}.")
        if joints.shape[0] < 2:
            raise DomainError("A 3D pose needs at least two joints.")
        if not np.all(np.isfinite(joints)):
            raise DomainError("3D pose coordinates must be finite.")
        root_index = int(self.root_index)
        if not 0 <= root_index < joints.shape[0]:
            raise DomainError(
                f"Root index {root_index} out of range for {joints.shape[0]} joints."
            )
        joints.setflags(write=False)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "root_index", root_index)

    @property
    def joint_count(self) -> int:
        """Return the number of joints J."""
        return self.joints.shape[0]

    @property
    def root(self) -> np.ndarray:
        """Return the root joint coordinates."""
        return self.joints[self.root_index]


@dataclass(frozen=True, eq=False)
class AbsolutePose:
    """Decomposition of a 3D pose into root coordinates and root-relative offsets."""

    root: np.ndarray
    relative: np.ndarray
    root_index: int = 0

    def __post_init__(self) -> None:
        root = np.array(self.root, dtype=np.float64)
        relative = np.array(self.relative, dtype=np.float64)
        if root.shape != (3,):
            raise DomainError(f"Root must be a 3D point, got shape {root.shape}.")
        if relative.ndim != 2 or relative.shape[1] != 3:
            raise DomainError(f"Relative pose must have shape (J, 3), got {relative.shape}.")
        if not 0 <= self.root_index < relative.shape[0]:
            raise DomainError(f"Root index {self.root_index} out of range.")
        if np.any(relative[self.root_index] != 0.0):
            raise DomainError("The relative offset of the root joint must be exactly zero.")
        root.setflags(write=False)
        relative.setflags(write=False)
        object.__setattr__(self, "root", root)
        object.__setattr__(self, "relative", relative)


@dataclass(frozen=True)
class CanonicalDepth:
    """Root depth divided by the focal length (mm/px)."""

    value: float

    def __post_init__(self) -> None:
        value = float(self.value)
        if not np.isfinite(value):
            raise DomainError(f"Canonical depth must be finite, got {value}.")
        object.__setattr__(self, "value", value)

    @property
    def is_physical(self) -> bool:
        """Whether the depth places the subject in front of the camera."""
        return self.value > 0

    @classmethod
    def from_depth(cls, root_depth: float, alpha: float) -> "CanonicalDepth":
        """Return the canonical depth R_z / alpha of a metric root depth."""
        if alpha <= 0:
            raise DomainError(f"Focal length alpha must be positive, got {alpha}.")
        return cls(root_depth / alpha)


DepthLike = Union[CanonicalDepth, float, np.ndarray]


def _depth_value(depth: DepthLike) -> Union[float, np.ndarray]:
    if isinstance(depth, CanonicalDepth):
        return depth.value
    return np.asarray(depth, dtype=np.float64)


def project(point: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points to image coordinates.

    Args:
        point: A 3D point or an array of shape ``(..., 3)`` in millimeters.
        cam: The camera intrinsics.

    Returns:
        The image coordinates, shape ``(..., 2)``, in pixels.

    Raises:
        DomainError: If any point lies at or behind the camera plane.
    """
    point = np.asarray(point, dtype=np.float64)
    if point.shape[-1] != 3:
        raise DomainError(f"Points must have 3 coordinates, got shape {point.shape}.")
    depth = point[..., 2]
    if np.any(~(depth > 0)):
        raise DomainError("Cannot project points at or behind the camera plane.")
    image = np.empty(point.shape[:-1] + (2,))
    image[..., 0] = cam.alpha * point[..., 0] / depth + cam.cx
    image[..., 1] = cam.alpha * point[..., 1] / depth + cam.cy
    return image


def backproject_root(
    r: np.ndarray, depth: DepthLike, cam: CameraIntrinsics
) -> np.ndarray:
    """Recover the root's (R_x, R_y) from its image position and canonical depth.

    Only the principal point of ``cam`` is used; the focal length cancels out.

    Args:
        r: Root image coordinates, shape ``(..., 2)``.
        depth: Canonical root depth, scalar or broadcastable to ``r[..., 0]``.
        cam: The camera intrinsics.

    Returns:
        The root (R_x, R_y) in millimeters, shape ``(..., 2)``.
    """
    r = np.asarray(r, dtype=np.float64)
    value = _depth_value(depth)
    if not np.all(np.isfinite(value)):
        raise DomainError("Canonical depth must be finite.")
    xy = np.empty(r.shape)
    xy[..., 0] = (r[..., 0] - cam.cx) * value
    xy[..., 1] = (r[..., 1] - cam.cy) * value
    return xy


def absolute_depth(depth: DepthLike, alpha: float) -> Union[float, np.ndarray]:
    """Promote a canonical root depth to a metric depth, R_z = alpha * depth.

    Raises:
        DomainError: If ``alpha`` is not positive.
    """
    if not alpha > 0:
        raise DomainError(f"Focal length alpha must be positive, got {alpha}.")
    value = _depth_value(depth)
    if np.ndim(value) == 0:
        return float(alpha * value)
    return alpha * value


def decompose(pose: Pose3D) -> AbsolutePose:
    """Split a pose into its root coordinates and root-relative offsets."""
    root = pose.joints[pose.root_index].copy()
    relative = pose.joints - root
    return AbsolutePose(root=root, relative=relative, root_index=pose.root_index)


def compose(abs_pose: AbsolutePose) -> Pose3D:
    """Rebuild the camera-frame pose P_i = R + P_hat_i."""
    return Pose3D(joints=abs_pose.root + abs_pose.relative, root_index=abs_pose.root_index)


def root_from_canonical(
    root_2d: np.ndarray, depth: DepthLike, cam: CameraIntrinsics
) -> Tuple[np.ndarray, Union[float, np.ndarray]]:
    """Return the absolute root coordinates from its image position and canonical depth.

    Args:
        root_2d: Root image coordinates, shape ``(..., 2)``.
        depth: Canonical root depth.
        cam: The camera intrinsics, focal length included.

    Returns:
        A tuple of the root coordinates, shape ``(..., 3)``, and the metric depth.
    """
    xy = backproject_root(root_2d, depth, cam)
    z = absolute_depth(depth, cam.alpha)
    root = np.concatenate([xy, np.expand_dims(np.asarray(z, dtype=np.float64), -1)], axis=-1)
    return root, z
