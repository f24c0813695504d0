# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Minibatch training of the lifter network."""

import logging
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from ..dataset import LiftingDataset
from ..error_models import ErrorModelSet
from ..exceptions import DomainError, NumericalError
from ..metrics import mpjpe, mrpe
from ..normalize import normalize_batch
from ..synth import flip_arrays
from .config import LifterConfig, TrainingSchedule
from .loss import depth_targets, loss_and_gradient, relative_targets
from .network import LifterWeights, backward, forward, predict, rng_streams
from .optimizer import RMSprop
from .pose_lifter import NetworkPoseLifter

logger = logging.getLogger(__name__)


class TrainingResult:
    """Trained weights and the per-epoch log."""

    def __init__(
        self,
        weights: LifterWeights,
        epoch_losses: List[float],
        learning_rates: List[float],
        validation_history: List[Dict[str, float]],
    ) -> None:
        self._weights = weights
        self._epoch_losses = epoch_losses
        self._learning_rates = learning_rates
        self._validation_history = validation_history

    @property
    def weights(self) -> LifterWeights:
        """return the trained weights, in eval mode"""
        return self._weights

    @property
    def epoch_losses(self) -> List[float]:
        """return the loss of the initialized network followed by each epoch's training loss"""
        return self._epoch_losses

    @property
    def learning_rates(self) -> List[float]:
        """return the learning rate of every epoch"""
        return self._learning_rates

    @property
    def validation_history(self) -> List[Dict[str, float]]:
        """return ``{"epoch", "mpjpe", "mrpe"}`` per epoch when a validation set was given"""
        return self._validation_history

    @property
    def final_loss(self) -> float:
        """return the training loss of the last epoch"""
        return self._epoch_losses[-1]


def dataset_loss(weights: LifterWeights, dataset: LiftingDataset) -> float:
    """Return the eval-mode loss of a network over a dataset."""
    config = weights.config
    inputs = normalize_batch(dataset.poses2d, dataset.principals, config.use_loc_scale)
    output = predict(inputs, weights)
    target_depth = depth_targets(dataset.root_depths, dataset.alphas, config)
    target_relative = relative_targets(dataset.relative3d, config.root_index)
    return loss_and_gradient(output.values, target_depth, target_relative, config.loss_lambda)[0]


def validate(weights: LifterWeights, dataset: LiftingDataset) -> Dict[str, float]:
    """Return the relative-pose MPJPE and the MRPE of a network on a dataset."""
    result = NetworkPoseLifter(weights).lift(dataset.poses2d, dataset.principals, dataset.alphas)
    return {
        "mpjpe": mpjpe(result.relative, dataset.relative3d, dataset.root_index),
        "mrpe": mrpe(result.root, dataset.roots)[0],
    }


def _check_dataset(dataset: LiftingDataset, config: LifterConfig, what: str) -> None:
    if len(dataset) == 0:
        raise DomainError(f"The {what} set is empty.")
    if dataset.joint_count != config.joint_count:
        raise DomainError(
            f"The {what} set has {dataset.joint_count} joints; the network expects "
            f"{config.joint_count}."
        )
    if dataset.root_index != config.root_index:
        raise DomainError(f"The {what} set uses root {dataset.root_index}, not {config.root_index}.")


def train(
    dataset: LiftingDataset,
    config: LifterConfig,
    schedule: TrainingSchedule,
    error_models: Optional[ErrorModelSet] = None,
    validation: Optional[LiftingDataset] = None,
    show_progress: bool = False,
) -> TrainingResult:
    """Train a lifter with RMSprop.

    Every epoch reshuffles the data, optionally perturbs the 2D inputs with fresh
    draws from ``error_models`` and flips a random half of the samples when
    ``schedule.flip`` is set. All randomness derives from ``config.seed``.

    Args:
        dataset: Training samples.
        config: The architecture and loss weight.
        schedule: The optimization schedule.
        error_models: Detection error models used to perturb the 2D inputs.
        validation: Samples evaluated in eval mode after every epoch.
        show_progress: Show a progress bar over epochs.

    Returns:
        The weights in eval mode with their per-epoch log.

    Raises:
        DomainError: If a dataset is empty or does not match the configuration.
        NumericalError: If the loss becomes NaN or infinite.
    """
    _check_dataset(dataset, config, "training")
    if validation is not None:
        _check_dataset(validation, config, "validation")
    if error_models is not None and error_models.joint_count != config.joint_count:
        raise DomainError("The error models and the network disagree on the joint count.")

    streams = rng_streams(config.seed)
    weights = LifterWeights.initialize(config)
    optimizer = RMSprop(weights.learnable(), schedule.learning_rate, schedule.rho, schedule.eps)
    target_depth = depth_targets(dataset.root_depths, dataset.alphas, config)
    count = len(dataset)

    epoch_losses = [dataset_loss(weights, dataset)]
    learning_rates: List[float] = []
    validation_history: List[Dict[str, float]] = []
    logger.info("Training on %d samples; initial loss %.6g", count, epoch_losses[0])

    weights.train()
    progress = tqdm(range(1, schedule.epochs + 1), desc="epochs", disable=not show_progress)
    for epoch in progress:
        optimizer.lr = schedule.learning_rate_at(epoch)
        order = streams["shuffle"].permutation(count)
        poses2d = dataset.poses2d
        relative3d = dataset.relative3d
        if error_models is not None:
            poses2d = error_models.perturb(poses2d, streams["noise"])
        if schedule.flip:
            chosen = streams["flip"].random(count) < 0.5
            poses2d, relative3d = poses2d.copy(), relative3d.copy()
            poses2d[chosen], relative3d[chosen] = flip_arrays(
                poses2d[chosen], relative3d[chosen], dataset.principals[chosen], schedule.pairing
            )
        inputs = normalize_batch(poses2d, dataset.principals, config.use_loc_scale)
        targets = relative_targets(relative3d, config.root_index)

        total = 0.0
        for start in range(0, count, schedule.batch_size):
            batch = order[start : start + schedule.batch_size]
            output, cache = forward(inputs[batch], weights, training=True, rng=streams["dropout"])
            batch_loss, grad = loss_and_gradient(
                output.values, target_depth[batch], targets[batch], config.loss_lambda
            )
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"Loss became {batch_loss} in epoch {epoch}; lower the learning rate.",
                    epoch=epoch,
                )
            optimizer.step(backward(cache, grad, weights))
            total += batch_loss * len(batch)

        epoch_losses.append(total / count)
        learning_rates.append(optimizer.lr)
        message = f"epoch {epoch}: lr={optimizer.lr:g} loss={epoch_losses[-1]:.6g}"
        if validation is not None:
            scores = validate(weights, validation)
            validation_history.append({"epoch": epoch, **scores})
            message += f" val_mpjpe={scores['mpjpe']:.3f} val_mrpe={scores['mrpe']:.3f}"
        logger.info(message)
        progress.set_postfix(loss=epoch_losses[-1])

    weights.eval()
    return TrainingResult(weights, epoch_losses, learning_rates, validation_history)
