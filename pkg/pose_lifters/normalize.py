# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

r"""The normalization layer of the lifter.

A 2D pose :math:`\{p_i\}` is first shifted by the principal point, then brought to
zero mean and unit RMS radius. The location :math:`u` and scale :math:`\sigma` removed
by the second step are appended, giving the (2J+3)-dimensional network input laid out
as ``[p̂_1.x, p̂_1.y, ..., p̂_J.x, p̂_J.y, u.x, u.y, σ]``. Weight files depend on
this layout.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .exceptions import DomainError


@dataclass(frozen=True, eq=False)
class Pose2D:
    """An ordered set of J joints in original-image pixel coordinates."""

    joints: np.ndarray

    def __post_init__(self) -> None:
        joints = np.array(self.joints, dtype=np.float64)
        if joints.ndim != 2 or joints.shape[1] != 2:
            raise DomainError(f"2D pose joints must have shape (J, 2), got {joints.shape}.")
        if joints.shape[0] < 2:
            raise DomainError(f"A 2D pose needs at least two joints, got {joints.shape[0]}.")
        if not np.all(np.isfinite(joints)):
            raise DomainError("2D pose coordinates must be finite.")
        joints.setflags(write=False)
        object.__setattr__(self, "joints", joints)

    @property
    def joint_count(self) -> int:
        """Return the number of joints J."""
        return self.joints.shape[0]


@dataclass(frozen=True, eq=False)
class NormalizedInput:
    """Output of the normalization layer before flattening.

    ``use_loc_scale`` records the layout the input is meant for: 2J+3 values with the
    location and scale appended, or the 2J normalized coordinates alone.
    """

    normalized: np.ndarray
    location: np.ndarray
    scale: float
    use_loc_scale: bool = True

    def to_vector(self, use_loc_scale: Optional[bool] = None) -> np.ndarray:
        """Assemble the flat network input.

        Args:
            use_loc_scale: Append the location and scale. When ``False`` only the 2J
                normalized coordinates are returned. Defaults to the stored layout.

        Returns:
            A vector of length 2J+3 or 2J.
        """
        if use_loc_scale is None:
            use_loc_scale = self.use_loc_scale
        flat = self.normalized.reshape(-1)
        if not use_loc_scale:
            return flat.copy()
        return np.concatenate([flat, self.location, [self.scale]])

    def __len__(self) -> int:
        return input_dim(self.normalized.shape[0], self.use_loc_scale)


def input_dim(joint_count: int, use_loc_scale: bool = True) -> int:
    """Return the network input dimension for ``joint_count`` joints."""
    return 2 * joint_count + (3 if use_loc_scale else 0)


def _joints(pose: Union[Pose2D, np.ndarray]) -> np.ndarray:
    if isinstance(pose, Pose2D):
        return pose.joints
    return np.asarray(pose, dtype=np.float64)


def shift_principal(pose: Pose2D, principal: Tuple[float, float]) -> Pose2D:
    """Express the joints relative to the principal point (c_x, c_y)."""
    return Pose2D(_joints(pose) - np.asarray(principal, dtype=np.float64))


def statistics(pose: Union[Pose2D, np.ndarray]) -> Tuple[np.ndarray, float]:
    """Return the mean vector u and the scalar scale σ of a 2D pose.

    σ is the RMS distance of the joints from their mean, a single scalar taken over
    the full 2D scatter.
    """
    joints = _joints(pose)
    location = joints.mean(axis=0)
    scale = float(np.sqrt(np.sum((joints - location) ** 2) / joints.shape[0]))
    return location, scale


def normalize_layer(
    pose: Union[Pose2D, np.ndarray], principal: Tuple[float, float], use_loc_scale: bool = True
) -> NormalizedInput:
    """Apply both normalization steps to one pose.

    Args:
        pose: The 2D pose in original-image coordinates.
        principal: The principal point (c_x, c_y).
        use_loc_scale: The input layout the result flattens to.

    Returns:
        The normalized coordinates together with their location and scale.

    Raises:
        DomainError: If the pose is degenerate (σ = 0).
    """
    shifted = shift_principal(pose, principal).joints
    location, scale = statistics(shifted)
    if not scale > 0:
        raise DomainError("Degenerate 2D pose: all joints coincide, scale is zero.")
    return NormalizedInput(
        normalized=(shifted - location) / scale,
        location=location,
        scale=scale,
        use_loc_scale=use_loc_scale,
    )


def normalize_batch(
    poses2d: np.ndarray, principals: np.ndarray, use_loc_scale: bool = True
) -> np.ndarray:
    """Vectorized :func:`normalize_layer` producing a network input matrix.

    Args:
        poses2d: Poses of shape ``(N, J, 2)``.
        principals: Principal points of shape ``(N, 2)`` or ``(2,)``.
        use_loc_scale: Append location and scale to each row.

    Returns:
        A matrix of shape ``(N, 2J+3)``, or ``(N, 2J)`` without location and scale.

    Raises:
        DomainError: If any pose is degenerate.
    """
    poses2d = np.asarray(poses2d, dtype=np.float64)
    if poses2d.ndim != 3 or poses2d.shape[2] != 2:
        raise DomainError(f"Expected poses of shape (N, J, 2), got {poses2d.shape}.")
    principals = np.broadcast_to(np.asarray(principals, dtype=np.float64), (poses2d.shape[0], 2))
    shifted = poses2d - principals[:, None, :]
    location = shifted.mean(axis=1)
    centered = shifted - location[:, None, :]
    scale = np.sqrt(np.sum(centered**2, axis=(1, 2)) / poses2d.shape[1])
    degenerate = np.flatnonzero(~(scale > 0))
    if degenerate.size:
        raise DomainError(f"Degenerate 2D pose at index {int(degenerate[0])}: scale is zero.")
    normalized = (centered / scale[:, None, None]).reshape(poses2d.shape[0], -1)
    if not use_loc_scale:
        return normalized
    return np.concatenate([normalized, location, scale[:, None]], axis=1)
