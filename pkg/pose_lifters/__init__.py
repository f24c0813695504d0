# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""
Absolute pose lifters (:mod:`pose_lifters`)
===========================================
It contains a lifter that turns a single 2D human pose, detected in an image, into an
absolute 3D pose in the camera frame, such as :class:`~pose_lifters.NetworkPoseLifter`.
The network predicts a root-relative 3D pose together with a canonical root depth,
the root depth divided by the focal length. The canonical depth does not depend on
the camera, so the same network serves images taken with different focal lengths;
the metric root depth follows once the focal length is known.
Training inputs are made robust by perturbing ground truth 2D poses with a per-joint
error model, a Gaussian for jitter mixed with a uniform component for inversions and
misses, fitted to the errors of a real 2D detector.

`Error models`_
  Fitting the Gaussian and uniform mixture by expectation maximization and sampling from it.

`Lifters`_
  The residual network with its batch normalization, dropout, loss, RMSprop training
  and the lifting interface.

.. currentmodule:: pose_lifters

Geometry
========

.. autosummary::
   :toctree: ../stubs/
   :nosignatures:

   CameraIntrinsics
   Pose3D
   AbsolutePose
   CanonicalDepth
   project
   backproject_root
   absolute_depth
   decompose
   compose

Error models
============

.. autosummary::
   :toctree: ../stubs/
   :nosignatures:

   MixtureErrorParams
   ErrorModelSet
   fit_em
   perturb_pose

Lifters
=======

.. autosummary::
   :toctree: ../stubs/
   :nosignatures:

   LifterConfig
   TrainingSchedule
   PoseLifter
   LiftingResult
   NetworkPoseLifter
   MeanPoseLifter
   train

Data and evaluation
===================

.. autosummary::
    :toctree: ../stubs/

    LiftingDataset
    SkeletonSpec
    generate
    evaluate
    read_pose_file
    write_pose_file

"""

from .dataset import LiftingDataset
from .error_models import ErrorModelSet, MixtureErrorParams, fit_em, perturb_pose
from .exceptions import DomainError, FormatError, NumericalError, PoseLiftingError, UsageError
from .geometry import (
    AbsolutePose,
    CameraIntrinsics,
    CanonicalDepth,
    Pose3D,
    absolute_depth,
    backproject_root,
    compose,
    decompose,
    project,
)
from .lifters import (
    LifterConfig,
    LiftingResult,
    MeanPoseLifter,
    NetworkPoseLifter,
    PoseLifter,
    TrainingSchedule,
    train,
)
from .metrics import evaluate, mpjpe, mrpe, pa_mpjpe
from .normalize import Pose2D, normalize_layer
from .pose_file import PoseFile, PoseRecord, read_pose_file, write_pose_file
from .synth import SkeletonSpec, generate

__all__ = [
    "PoseLiftingError",
    "DomainError",
    "FormatError",
    "UsageError",
    "NumericalError",
    "CameraIntrinsics",
    "Pose3D",
    "AbsolutePose",
    "CanonicalDepth",
    "project",
    "backproject_root",
    "absolute_depth",
    "decompose",
    "compose",
    "Pose2D",
    "normalize_layer",
    "MixtureErrorParams",
    "ErrorModelSet",
    "fit_em",
    "perturb_pose",
    "LifterConfig",
    "TrainingSchedule",
    "PoseLifter",
    "LiftingResult",
    "NetworkPoseLifter",
    "MeanPoseLifter",
    "train",
    "LiftingDataset",
    "SkeletonSpec",
    "generate",
    "evaluate",
    "mpjpe",
    "pa_mpjpe",
    "mrpe",
    "PoseFile",
    "PoseRecord",
    "read_pose_file",
    "write_pose_file",
]
