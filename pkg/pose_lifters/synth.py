# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Synthetic articulated poses with exact cameras and projections."""

import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .dataset import LiftingDataset
from .exceptions import DomainError, FormatError
from .geometry import CameraIntrinsics, CanonicalDepth, Pose3D, project
from .normalize import Pose2D
from .pose_file import PoseFile, PoseRecord

logger = logging.getLogger(__name__)

Pairing = Tuple[Tuple[int, int], ...]

# Body frame is Y up; the camera frame is Y down with the subject facing the camera.
BODY_TO_CAMERA = np.diag([1.0, -1.0, -1.0])

DEFAULT_DEPTH_RANGE = (2000.0, 8000.0)
DEFAULT_ALPHA_RANGE = (1000.0, 1000.0)
FOCAL_INVARIANCE_ALPHA_RANGE = (900.0, 1700.0)

_DEFAULT_JOINTS = (
    # name, parent, rest offset from the parent (mm), angle half-ranges (deg)
    ("pelvis", -1, (0.0, 0.0, 0.0), (10.0, 0.0, 10.0)),
    ("right_hip", 0, (-130.0, 0.0, 0.0), (45.0, 15.0, 20.0)),
    ("right_knee", 1, (0.0, -450.0, 0.0), (60.0, 0.0, 5.0)),
    ("right_ankle", 2, (0.0, -440.0, 0.0), (0.0, 0.0, 0.0)),
    ("left_hip", 0, (130.0, 0.0, 0.0), (45.0, 15.0, 20.0)),
    ("left_knee", 4, (0.0, -450.0, 0.0), (60.0, 0.0, 5.0)),
    ("left_ankle", 5, (0.0, -440.0, 0.0), (0.0, 0.0, 0.0)),
    ("spine", 0, (0.0, 230.0, 0.0), (20.0, 20.0, 15.0)),
    ("thorax", 7, (0.0, 250.0, 0.0), (15.0, 15.0, 10.0)),
    ("neck", 8, (0.0, 110.0, 0.0), (20.0, 30.0, 15.0)),
    ("head", 9, (0.0, 115.0, 0.0), (0.0, 0.0, 0.0)),
    ("left_shoulder", 8, (150.0, 0.0, 0.0), (60.0, 30.0, 60.0)),
    ("left_elbow", 11, (0.0, -280.0, 0.0), (70.0, 0.0, 30.0)),
    ("left_wrist", 12, (0.0, -250.0, 0.0), (0.0, 0.0, 0.0)),
    ("right_shoulder", 8, (-150.0, 0.0, 0.0), (60.0, 30.0, 60.0)),
    ("right_elbow", 14, (0.0, -280.0, 0.0), (70.0, 0.0, 30.0)),
    ("right_wrist", 15, (0.0, -250.0, 0.0), (0.0, 0.0, 0.0)),
)

_DEFAULT_PAIRING: Pairing = (
    (0, 0),
    (1, 4),
    (2, 5),
    (3, 6),
    (7, 7),
    (8, 8),
    (9, 9),
    (10, 10),
    (11, 14),
    (12, 15),
    (13, 16),
)


def pairing_permutation(pairing: Sequence[Sequence[int]], joint_count: int) -> np.ndarray:
    """Turn a left/right pairing table into the joint permutation of a horizontal flip.

    Args:
        pairing: Pairs ``(a, b)`` of mirrored joints; midline joints are paired with
            themselves.
        joint_count: The number of joints J.

    Returns:
        An index array ``perm`` with ``flipped[i] = original[perm[i]]``.

    Raises:
        DomainError: If the table does not name every joint exactly once.
    """
    perm = np.full(joint_count, -1, dtype=int)
    seen = np.zeros(joint_count, dtype=int)
    for pair in pairing:
        if len(pair) != 2:
            raise DomainError(f"Pairing entries must be pairs, got {pair!r}.")
        a, b = int(pair[0]), int(pair[1])
        if not (0 <= a < joint_count and 0 <= b < joint_count):
            raise DomainError(f"Pairing ({a}, {b}) out of range for {joint_count} joints.")
        perm[a], perm[b] = b, a
        seen[a] += 1
        if b != a:
            seen[b] += 1
    if np.any(seen != 1):
        missing = np.flatnonzero(seen == 0).tolist()
        repeated = np.flatnonzero(seen > 1).tolist()
        raise DomainError(
            f"Incomplete pairing table: joints {missing} unpaired, joints {repeated} repeated."
        )
    return perm


@dataclass(frozen=True, eq=False)
class SkeletonSpec:
    """A kinematic tree with rest offsets, joint limits and a left/right pairing."""

    joint_names: Tuple[str, ...]
    parents: Tuple[int, ...]
    offsets: np.ndarray
    angle_limits: np.ndarray
    pairing: Pairing

    def __post_init__(self) -> None:
        parents = tuple(int(p) for p in self.parents)
        joint_count = len(parents)
        offsets = np.array(self.offsets, dtype=np.float64)
        limits = np.array(self.angle_limits, dtype=np.float64)
        if len(self.joint_names) != joint_count:
            raise DomainError("Every joint needs exactly one name.")
        if offsets.shape != (joint_count, 3) or limits.shape != (joint_count, 3):
            raise DomainError("Offsets and angle limits must have shape (J, 3).")
        if parents.count(-1) != 1:
            raise DomainError("A skeleton needs exactly one parentless root joint.")
        for joint, parent in enumerate(parents):
            if parent != -1 and not (0 <= parent < joint_count and parent != joint):
                raise DomainError(f"Joint {joint} has invalid parent {parent}.")
        root = parents.index(-1)
        for joint in range(joint_count):
            node, steps = joint, 0
            while node != root:
                node, steps = parents[node], steps + 1
                if steps > joint_count:
                    raise DomainError(f"Joint {joint} is on a cycle; parents must form a tree.")
        lengths = np.linalg.norm(offsets, axis=1)
        if np.any(np.delete(lengths, root) <= 0):
            raise DomainError("Every bone must have a positive length.")
        if np.any(offsets[root] != 0):
            raise DomainError("The root joint has no rest offset.")
        if np.any(limits < 0):
            raise DomainError("Joint angle limits are half-ranges and must be non-negative.")
        pairing = tuple((int(a), int(b)) for a, b in self.pairing)
        perm = pairing_permutation(pairing, joint_count)
        if perm[root] != root:
            raise DomainError("The root joint must be paired with itself.")
        offsets.setflags(write=False)
        limits.setflags(write=False)
        object.__setattr__(self, "joint_names", tuple(str(n) for n in self.joint_names))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "angle_limits", limits)
        object.__setattr__(self, "pairing", pairing)

    @property
    def joint_count(self) -> int:
        """Return the number of joints J."""
        return len(self.parents)

    @property
    def root_index(self) -> int:
        """Return the index of the parentless joint."""
        return self.parents.index(-1)

    @property
    def bone_lengths(self) -> np.ndarray:
        """Return the length of the bone ending at each joint (zero for the root)."""
        return np.linalg.norm(self.offsets, axis=1)

    @property
    def order(self) -> List[int]:
        """Return the joints ordered so that every parent precedes its children."""
        order, frontier = [], [self.root_index]
        while frontier:
            joint = frontier.pop(0)
            order.append(joint)
            frontier.extend(j for j, p in enumerate(self.parents) if p == joint)
        return order

    @property
    def reach(self) -> float:
        """Return the largest possible distance of any joint from the root."""
        lengths = self.bone_lengths
        reach = np.zeros(self.joint_count)
        for joint in self.order[1:]:
            reach[joint] = reach[self.parents[joint]] + lengths[joint]
        return float(reach.max())

    @classmethod
    def default(cls) -> "SkeletonSpec":
        """Return the 17-joint skeleton with the pelvis as root."""
        names, parents, offsets, limits = zip(*_DEFAULT_JOINTS)
        return cls(
            joint_names=names,
            parents=parents,
            offsets=np.array(offsets),
            angle_limits=np.radians(np.array(limits)),
            pairing=_DEFAULT_PAIRING,
        )

    def to_dict(self) -> Dict:
        """Return the JSON document of this skeleton."""
        return {
            "joint_names": list(self.joint_names),
            "parents": list(self.parents),
            "offsets": self.offsets.tolist(),
            "angle_limits_deg": np.degrees(self.angle_limits).tolist(),
            "pairing": [list(pair) for pair in self.pairing],
        }

    @classmethod
    def from_dict(cls, document: Dict) -> "SkeletonSpec":
        """Build a skeleton from its JSON document.

        Raises:
            FormatError: If a field is missing.
        """
        try:
            return cls(
                joint_names=document["joint_names"],
                parents=document["parents"],
                offsets=document["offsets"],
                angle_limits=np.radians(np.asarray(document["angle_limits_deg"], dtype=float)),
                pairing=document["pairing"],
            )
        except KeyError as err:
            raise FormatError(f"Skeleton document is missing field {err}.") from err

    @classmethod
    def load(cls, path: str) -> "SkeletonSpec":
        """Read a skeleton JSON file."""
        with open(path, "r", encoding="utf-8") as handle:
            try:
                document = json.load(handle)
            except json.JSONDecodeError as err:
                raise FormatError(f"{path} is not valid JSON: {err}") from err
        return cls.from_dict(document)


def forward_kinematics(
    spec: SkeletonSpec, local_angles: np.ndarray, root_yaw: float = 0.0
) -> np.ndarray:
    """Place the joints of a posed skeleton in its body frame.

    Args:
        spec: The skeleton.
        local_angles: XYZ Euler angles in radians of every joint relative to its
            parent, shape ``(J, 3)``. The rotation at a joint turns the bones of its
            children.
        root_yaw: Rotation of the whole body about the vertical axis, in radians.

    Returns:
        Joint positions relative to the root in millimeters, Y up, shape ``(J, 3)``.
    """
    local_angles = np.asarray(local_angles, dtype=np.float64)
    if local_angles.shape != (spec.joint_count, 3):
        raise DomainError(
            f"Joint angles must have shape ({spec.joint_count}, 3), got {local_angles.shape}."
        )
    local = Rotation.from_euler("xyz", local_angles).as_matrix()
    root = spec.root_index
    world = np.empty_like(local)
    positions = np.zeros((spec.joint_count, 3))
    world[root] = Rotation.from_euler("y", root_yaw).as_matrix() @ local[root]
    for joint in spec.order[1:]:
        parent = spec.parents[joint]
        positions[joint] = positions[parent] + world[parent] @ spec.offsets[joint]
        world[joint] = world[parent] @ local[joint]
    return positions


@dataclass(frozen=True, eq=False)
class SceneSample:
    """A camera-frame 3D pose, its camera and its exact 2D projection."""

    pose3d: Pose3D
    cam: CameraIntrinsics
    pose2d: Pose2D
    canonical_depth: CanonicalDepth

    def __post_init__(self) -> None:
        if not np.array_equal(self.pose2d.joints, project(self.pose3d.joints, self.cam)):
            raise DomainError("A scene sample's 2D pose must be the projection of its 3D pose.")
        if self.canonical_depth.value != self.pose3d.root[2] / self.cam.alpha:
            raise DomainError("Canonical depth disagrees with the root depth and focal length.")

    @classmethod
    def render(cls, pose3d: Pose3D, cam: CameraIntrinsics) -> "SceneSample":
        """Project a 3D pose and derive its canonical root depth."""
        return cls(
            pose3d=pose3d,
            cam=cam,
            pose2d=Pose2D(project(pose3d.joints, cam)),
            canonical_depth=CanonicalDepth.from_depth(pose3d.root[2], cam.alpha),
        )


def _check_range(values: Tuple[float, float], what: str) -> Tuple[float, float]:
    low, high = float(values[0]), float(values[1])
    if not (np.isfinite(low) and np.isfinite(high)) or low > high:
        raise DomainError(f"Invalid {what} range ({low}, {high}).")
    return low, high


def generate(
    spec: SkeletonSpec,
    n: int,
    depth_range: Tuple[float, float],
    alpha_range: Tuple[float, float],
    rng: np.random.Generator,
    frozen_posture: bool = False,
    principal: Tuple[float, float] = (512.0, 512.0),
    image_offset: Tuple[float, float] = (250.0, 150.0),
    yaw_range: Tuple[float, float] = (-np.pi, np.pi),
) -> List[SceneSample]:
    """Generate random posed skeletons in front of random cameras.

    Sample ``i`` draws from its own stream seeded by ``(seed, i)``, where the seed
    is taken once from ``rng``.

    Args:
        spec: The skeleton.
        n: Number of samples.
        depth_range: Range of the root depth R_z in millimeters.
        alpha_range: Range of the focal length in pixels; equal bounds fix it.
        rng: Source of the dataset seed.
        frozen_posture: Use zero joint angles and zero yaw for every sample, which
            gives a planar pose parallel to the image plane.
        principal: The principal point of every camera.
        image_offset: Half-ranges in pixels of the root's image offset from the
            principal point.
        yaw_range: Range of the body yaw in radians.

    Returns:
        The samples.

    Raises:
        DomainError: If the depth range does not keep every joint in front of the
            camera, or a range is invalid.
    """
    if n < 0:
        raise DomainError(f"Sample count must be non-negative, got {n}.")
    depth_low, depth_high = _check_range(depth_range, "depth")
    alpha_low, alpha_high = _check_range(alpha_range, "focal length")
    yaw_low, yaw_high = _check_range(yaw_range, "yaw")
    if depth_low <= 0:
        raise DomainError(f"Depth range must be positive, got lower bound {depth_low}.")
    if depth_low <= spec.reach:
        raise DomainError(
            f"Depth lower bound {depth_low} mm does not keep a skeleton of reach "
            f"{spec.reach:.1f} mm in front of the camera."
        )
    if alpha_low <= 0:
        raise DomainError(f"Focal lengths must be positive, got lower bound {alpha_low}.")
    offset = np.asarray(image_offset, dtype=np.float64)
    base_seed = int(rng.integers(2**63))
    samples = []
    for i in range(n):
        stream = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(i,)))
        if frozen_posture:
            angles, yaw = np.zeros((spec.joint_count, 3)), 0.0
        else:
            angles = stream.uniform(-spec.angle_limits, spec.angle_limits)
            yaw = stream.uniform(yaw_low, yaw_high)
        depth = stream.uniform(depth_low, depth_high)
        alpha = stream.uniform(alpha_low, alpha_high)
        shift = stream.uniform(-offset, offset)
        root = np.array([shift[0] * depth / alpha, shift[1] * depth / alpha, depth])
        body = forward_kinematics(spec, angles, yaw)
        joints = root + body @ BODY_TO_CAMERA.T
        joints[spec.root_index] = root
        cam = CameraIntrinsics(alpha=alpha, cx=principal[0], cy=principal[1])
        samples.append(SceneSample.render(Pose3D(joints, spec.root_index), cam))
    logger.debug("Generated %d synthetic samples", n)
    return samples


def flip(sample: SceneSample, pairing: Sequence[Sequence[int]]) -> SceneSample:
    """Mirror a sample horizontally.

    The 3D X coordinates are negated and mirrored joints swapped; the 2D pose is the
    projection of the flipped 3D pose, so its x coordinates mirror about c_x.

    Raises:
        DomainError: If the pairing table is incomplete or moves the root.
    """
    perm = pairing_permutation(pairing, sample.pose3d.joint_count)
    root = sample.pose3d.root_index
    if perm[root] != root:
        raise DomainError("The root joint must be paired with itself.")
    joints = sample.pose3d.joints[perm] * np.array([-1.0, 1.0, 1.0])
    return SceneSample.render(Pose3D(joints, root), sample.cam)


def flip_arrays(
    poses2d: np.ndarray,
    relative3d: np.ndarray,
    principals: np.ndarray,
    pairing: Sequence[Sequence[int]],
) -> Tuple[np.ndarray, np.ndarray]:
    """Batched horizontal flip of 2D inputs and root-relative 3D targets.

    Args:
        poses2d: Shape ``(N, J, 2)``.
        relative3d: Shape ``(N, J, 3)``.
        principals: Shape ``(N, 2)``.
        pairing: The left/right pairing table.

    Returns:
        The flipped 2D poses (x mirrored about c_x) and relative poses (X negated),
        with mirrored joints swapped.
    """
    poses2d = np.asarray(poses2d, dtype=np.float64)
    perm = pairing_permutation(pairing, poses2d.shape[1])
    flipped2d = poses2d[:, perm].copy()
    flipped2d[..., 0] = 2.0 * np.asarray(principals)[:, None, 0] - flipped2d[..., 0]
    flipped3d = np.asarray(relative3d, dtype=np.float64)[:, perm] * np.array([-1.0, 1.0, 1.0])
    return flipped2d, flipped3d


def to_lifting_dataset(samples: Sequence[SceneSample]) -> LiftingDataset:
    """Convert scene samples into training arrays.

    Raises:
        DomainError: If ``samples`` is empty.
    """
    if len(samples) == 0:
        raise DomainError("Cannot build a lifting dataset from zero samples.")
    root_index = samples[0].pose3d.root_index
    poses3d = np.stack([s.pose3d.joints for s in samples])
    roots = poses3d[:, root_index].copy()
    return LiftingDataset(
        np.stack([s.pose2d.joints for s in samples]),
        np.stack([s.cam.principal_point for s in samples]),
        np.array([s.cam.alpha for s in samples]),
        roots,
        poses3d - roots[:, None, :],
        root_index=root_index,
    )


def to_pose_file(
    samples: Sequence[SceneSample], joint_names: Optional[Sequence[str]] = None, joint_count: int = 0
) -> PoseFile:
    """Wrap samples in a pose file; ``joint_count`` is only used when there are none."""
    if samples:
        joint_count = samples[0].pose3d.joint_count
    records = [
        PoseRecord(
            id=f"{i:06d}",
            root_index=s.pose3d.root_index,
            pose2d=s.pose2d.joints,
            pose3d=s.pose3d.joints,
            camera=s.cam,
            extras={"canonical_depth": s.canonical_depth.value},
        )
        for i, s in enumerate(samples)
    ]
    names = None if joint_names is None else list(joint_names)
    return PoseFile(joint_count=joint_count, records=records, joint_names=names)


def from_pose_file(pose_file: PoseFile) -> List[SceneSample]:
    """Rebuild scene samples from pose file records with ``pose3d`` and ``camera``.

    Raises:
        FormatError: If a record lacks its 3D pose or camera.
        DomainError: If a stored 2D pose is not the projection of its 3D pose.
    """
    samples = []
    for record in pose_file.records:
        if record.pose3d is None or record.camera is None:
            raise FormatError(f"Record '{record.id}' needs pose3d and camera.")
        pose3d = Pose3D(record.pose3d, record.root_index)
        if record.pose2d is None:
            samples.append(SceneSample.render(pose3d, record.camera))
        else:
            samples.append(
                SceneSample(
                    pose3d=pose3d,
                    cam=record.camera,
                    pose2d=Pose2D(record.pose2d),
                    canonical_depth=CanonicalDepth.from_depth(pose3d.root[2], record.camera.alpha),
                )
            )
    return samples
