# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""The lifter network, its training and the 2D-to-3D lifting interface."""

from .config import LifterConfig, TrainingSchedule, load_config
from .layers import (
    batch_norm_backward,
    batch_norm_forward,
    dropout_backward,
    dropout_forward,
    linear_backward,
    linear_forward,
    relu_backward,
    relu_forward,
)
from .loss import depth_targets, loss, loss_and_gradient, relative_targets
from .network import (
    ForwardCache,
    LifterOutput,
    LifterWeights,
    backward,
    forward,
    load_weights,
    predict,
    residual_block,
    rng_streams,
    save_weights,
)
from .optimizer import RMSprop, rmsprop_step
from .pose_lifter import LiftingResult, MeanPoseLifter, NetworkPoseLifter, PoseLifter
from .trainer import TrainingResult, dataset_loss, train, validate

__all__ = [
    "LifterConfig",
    "TrainingSchedule",
    "load_config",
    "linear_forward",
    "linear_backward",
    "batch_norm_forward",
    "batch_norm_backward",
    "dropout_forward",
    "dropout_backward",
    "relu_forward",
    "relu_backward",
    "depth_targets",
    "relative_targets",
    "loss",
    "loss_and_gradient",
    "LifterWeights",
    "LifterOutput",
    "ForwardCache",
    "forward",
    "backward",
    "residual_block",
    "predict",
    "rng_streams",
    "save_weights",
    "load_weights",
    "RMSprop",
    "rmsprop_step",
    "PoseLifter",
    "LiftingResult",
    "NetworkPoseLifter",
    "MeanPoseLifter",
    "TrainingResult",
    "train",
    "dataset_loss",
    "validate",
]
