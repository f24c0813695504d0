# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Versioned JSON-lines pose files.

The first line is a header ``{"version", "joint_count", "joint_names"?, "units"}``;
each following line is one record ``{"id", "root_index", "pose2d"?, "pose3d"?,
"camera"?: {"alpha", "cx", "cy"}}`` plus optional ``canonical_depth``,
``relative3d`` and ``action`` fields. Floats are written with the shortest repr that
round-trips, so write then read is lossless for float64 values.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .exceptions import FormatError
from .geometry import CameraIntrinsics

logger = logging.getLogger(__name__)

POSE_FILE_VERSION = "1.0"
UNITS = {"image": "px", "camera": "mm"}
EXTRA_FIELDS = ("canonical_depth", "relative3d", "action")


def check_version(found: Any, supported: str, what: str) -> None:
    """Reject a document whose major version differs from the supported one.

    Raises:
        FormatError: On a missing, malformed or incompatible version.
    """
    try:
        major = int(str(found).split(".")[0])
    except ValueError as err:
        raise FormatError(f"Malformed {what} version '{found}'.") from err
    if major != int(supported.split(".")[0]):
        raise FormatError(
            f"Unsupported {what} version {found}; this library reads version {supported}."
        )


@dataclass(eq=False)
class PoseRecord:
    """One sample of a pose file."""

    id: str
    root_index: int = 0
    pose2d: Optional[np.ndarray] = None
    pose3d: Optional[np.ndarray] = None
    camera: Optional[CameraIntrinsics] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Return the JSON object of this record."""
        document: Dict[str, Any] = {"id": self.id, "root_index": int(self.root_index)}
        if self.pose2d is not None:
            document["pose2d"] = np.asarray(self.pose2d, dtype=np.float64).tolist()
        if self.pose3d is not None:
            document["pose3d"] = np.asarray(self.pose3d, dtype=np.float64).tolist()
        if self.camera is not None:
            document["camera"] = {
                "alpha": self.camera.alpha,
                "cx": self.camera.cx,
                "cy": self.camera.cy,
            }
        for key in EXTRA_FIELDS:
            if key in self.extras:
                value = self.extras[key]
                document[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return document


@dataclass(eq=False)
class PoseFile:
    """A header plus its records."""

    joint_count: int
    records: List[PoseRecord] = field(default_factory=list)
    joint_names: Optional[List[str]] = None

    def header(self) -> Dict[str, Any]:
        """Return the JSON header line."""
        header: Dict[str, Any] = {"version": POSE_FILE_VERSION, "joint_count": int(self.joint_count)}
        if self.joint_names is not None:
            header["joint_names"] = list(self.joint_names)
        header["units"] = dict(UNITS)
        return header

    def __len__(self) -> int:
        return len(self.records)

    def stack(self, key: str) -> np.ndarray:
        """Stack one array field of all records.

        Args:
            key: ``"pose2d"``, ``"pose3d"`` or ``"relative3d"``.

        Returns:
            An array of shape ``(N, J, 2)`` or ``(N, J, 3)``.

        Raises:
            FormatError: If a record lacks the field.
        """
        width = 2 if key == "pose2d" else 3
        arrays = []
        for record in self.records:
            value = record.extras.get(key) if key in EXTRA_FIELDS else getattr(record, key)
            if value is None:
                raise FormatError(f"Record '{record.id}' has no '{key}' field.")
            arrays.append(np.asarray(value, dtype=np.float64))
        if not arrays:
            return np.zeros((0, self.joint_count, width))
        return np.stack(arrays)

    def cameras(self) -> List[CameraIntrinsics]:
        """Return the camera of every record.

        Raises:
            FormatError: If a record lacks a camera.
        """
        cameras = []
        for record in self.records:
            if record.camera is None:
                raise FormatError(f"Record '{record.id}' has no camera.")
            cameras.append(record.camera)
        return cameras

    def root_indices(self) -> np.ndarray:
        """Return the root index of every record."""
        return np.array([r.root_index for r in self.records], dtype=int)

    def by_id(self) -> Dict[str, PoseRecord]:
        """Return the records keyed by id."""
        return {record.id: record for record in self.records}


def _array(value: Any, joint_count: int, width: int, what: str, line: int) -> np.ndarray:
    try:
        array = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise FormatError(f"Line {line}: {what} is not a numeric array: {err}") from err
    if array.shape != (joint_count, width):
        raise FormatError(
            f"Line {line}: {what} has shape {array.shape}, expected ({joint_count}, {width})."
        )
    if not np.all(np.isfinite(array)):
        raise FormatError(f"Line {line}: {what} contains non-finite values.")
    return array


def _parse_record(document: Dict[str, Any], joint_count: int, line: int) -> PoseRecord:
    if not isinstance(document, dict):
        raise FormatError(f"Line {line}: a record must be a JSON object.")
    if "id" not in document:
        raise FormatError(f"Line {line}: record has no id.")
    root_index = document.get("root_index", 0)
    if isinstance(root_index, bool) or not isinstance(root_index, int):
        raise FormatError(f"Line {line}: root_index must be an integer, got {root_index!r}.")
    if not 0 <= root_index < joint_count:
        raise FormatError(f"Line {line}: root_index {root_index} out of range.")
    record = PoseRecord(id=str(document["id"]), root_index=root_index)
    if document.get("pose2d") is not None:
        record.pose2d = _array(document["pose2d"], joint_count, 2, "pose2d", line)
    if document.get("pose3d") is not None:
        record.pose3d = _array(document["pose3d"], joint_count, 3, "pose3d", line)
    if document.get("relative3d") is not None:
        record.extras["relative3d"] = _array(
            document["relative3d"], joint_count, 3, "relative3d", line
        )
    if document.get("camera") is not None:
        camera = document["camera"]
        try:
            record.camera = CameraIntrinsics(
                alpha=camera["alpha"], cx=camera["cx"], cy=camera["cy"]
            )
        except (KeyError, TypeError, ValueError) as err:
            raise FormatError(f"Line {line}: invalid camera {camera!r}: {err}") from err
    for key in ("canonical_depth", "action"):
        if document.get(key) is not None:
            record.extras[key] = document[key]
    return record


def read_pose_file(path: str) -> PoseFile:
    """Read a pose file.

    Raises:
        FormatError: On malformed JSON, an incompatible version, wrong units or
            arrays whose length does not match the header joint count.
    """
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    if not lines:
        raise FormatError(f"{path} is empty; a pose file needs a header line.")
    try:
        header = json.loads(lines[0])
        documents = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as err:
        raise FormatError(f"{path} is not valid JSON lines: {err}") from err
    if not isinstance(header, dict) or "version" not in header or "joint_count" not in header:
        raise FormatError(f"{path}: header must carry version and joint_count.")
    check_version(header["version"], POSE_FILE_VERSION, "pose file")
    units = header.get("units", UNITS)
    if units != UNITS:
        raise FormatError(f"{path}: unsupported units {units}; expected {UNITS}.")
    joint_count = header["joint_count"]
    if isinstance(joint_count, bool) or not isinstance(joint_count, int) or joint_count < 1:
        raise FormatError(f"{path}: joint_count must be a positive integer.")
    records = [
        _parse_record(document, joint_count, line)
        for line, document in enumerate(documents, start=2)
    ]
    logger.debug("Read %d records with %d joints from %s", len(records), joint_count, path)
    return PoseFile(joint_count=joint_count, records=records, joint_names=header.get("joint_names"))


def write_pose_file(path: str, pose_file: PoseFile) -> None:
    """Write a pose file; the output bytes depend only on the content."""
    with open(path, "w", encoding="utf-8") as handle:
        for document in _documents(pose_file):
            handle.write(json.dumps(document))
            handle.write("\n")
    logger.debug("Wrote %d records to %s", len(pose_file), path)


def _documents(pose_file: PoseFile) -> Iterable[Dict[str, Any]]:
    yield pose_file.header()
    for record in pose_file.records:
        yield record.to_dict()


def records_from_arrays(
    ids: Sequence[str],
    pose2d: Optional[np.ndarray] = None,
    pose3d: Optional[np.ndarray] = None,
    cameras: Optional[Sequence[CameraIntrinsics]] = None,
    root_index: int = 0,
) -> List[PoseRecord]:
    """Build records from parallel arrays of shape ``(N, J, 2)`` / ``(N, J, 3)``."""
    records = []
    for i, record_id in enumerate(ids):
        records.append(
            PoseRecord(
                id=str(record_id),
                root_index=root_index,
                pose2d=None if pose2d is None else pose2d[i],
                pose3d=None if pose3d is None else pose3d[i],
                camera=None if cameras is None else cameras[i],
            )
        )
    return records
