# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Directional training checks on synthetic data.

The full-scale checks train for minutes and only run with ``POSE_LIFTERS_SLOW_TESTS=1``.
"""

import os
import unittest

import numpy as np
from scipy.stats import spearmanr

from pose_lifters.error_models import ErrorModelSet, MixtureErrorParams
from pose_lifters.lifters import (
    LifterConfig,
    MeanPoseLifter,
    NetworkPoseLifter,
    TrainingSchedule,
    train,
    validate,
)
from pose_lifters.metrics import mpjpe
from pose_lifters.normalize import statistics
from pose_lifters.synth import (
    DEFAULT_DEPTH_RANGE,
    FOCAL_INVARIANCE_ALPHA_RANGE,
    SkeletonSpec,
    generate,
    to_lifting_dataset,
)

SLOW = os.environ.get("POSE_LIFTERS_SLOW_TESTS") == "1"


def synthetic(count, seed, frozen_posture=False):
    samples = generate(
        SkeletonSpec.default(),
        count,
        DEFAULT_DEPTH_RANGE,
        FOCAL_INVARIANCE_ALPHA_RANGE,
        np.random.default_rng(seed),
        frozen_posture=frozen_posture,
    )
    return samples, to_lifting_dataset(samples)


def mean_pose_mpjpe(train_set, validation):
    result = MeanPoseLifter.fit(train_set).lift(validation.poses2d, validation.principals, validation.alphas)
    return mpjpe(result.relative, validation.relative3d, validation.root_index)


def detection_noise():
    params = MixtureErrorParams(0.85, (0.0, 0.0), (4.0, 4.0), 50.0)
    return ErrorModelSet([params] * 17)


class TestReducedTraining(unittest.TestCase):
    """
    Tests of short training runs.
    """

    def test_beats_mean_pose(self):
        """Test a briefly trained network beats the mean-pose predictor."""
        _, train_set = synthetic(2000, 0)
        _, validation = synthetic(300, 1)
        config = LifterConfig(hidden_dim=64, dropout_p=0.1, seed=2)
        result = train(train_set, config, TrainingSchedule(epochs=8))
        self.assertLess(validate(result.weights, validation)["mpjpe"], mean_pose_mpjpe(train_set, validation))
        self.assertLess(result.final_loss, result.epoch_losses[0])


@unittest.skipUnless(SLOW, "set POSE_LIFTERS_SLOW_TESTS=1 to run full-scale training checks")
class TestTrainingAblations(unittest.TestCase):
    """
    Tests of the desk-scale training ablations.
    """

    @classmethod
    def setUpClass(cls):
        _, cls.train_set = synthetic(20000, 10)
        _, cls.validation = synthetic(2000, 11)
        cls.config = LifterConfig(seed=12)
        cls.schedule = TrainingSchedule()

    def test_training_sanity(self):
        """Test the trained network halves the mean-pose error."""
        result = train(self.train_set, self.config, self.schedule)
        scores = validate(result.weights, self.validation)
        self.assertLess(scores["mpjpe"], 0.5 * mean_pose_mpjpe(self.train_set, self.validation))

    def test_location_and_scale(self):
        """Test feeding location and scale lowers the root error."""
        with_loc_scale = validate(train(self.train_set, self.config, self.schedule).weights, self.validation)
        without = validate(
            train(self.train_set, self.config.replace(use_loc_scale=False), self.schedule).weights,
            self.validation,
        )
        self.assertLess(with_loc_scale["mrpe"], without["mrpe"])
        self.assertLessEqual(with_loc_scale["mpjpe"], without["mpjpe"])

    def test_noise_synthesis(self):
        """Test training on perturbed inputs helps on noisy detections."""
        models = detection_noise()
        noisy = self.validation.with_poses2d(
            models.perturb(self.validation.poses2d, np.random.default_rng(13))
        )
        perturbed = validate(train(self.train_set, self.config, self.schedule, models).weights, noisy)
        clean = validate(train(self.train_set, self.config, self.schedule).weights, noisy)
        self.assertLess(perturbed["mpjpe"], clean["mpjpe"])
        self.assertLess(perturbed["mrpe"], clean["mrpe"])

    def test_depth_inverse_to_scale(self):
        """Test predicted canonical depth falls as the 2D scale grows."""
        weights = train(self.train_set, self.config, self.schedule).weights
        _, frozen = synthetic(500, 14, frozen_posture=True)
        result = NetworkPoseLifter(weights).lift(frozen.poses2d, frozen.principals)
        scales = [statistics(pose)[1] for pose in frozen.poses2d]
        correlation = spearmanr(scales, result.canonical_depth).correlation
        self.assertLessEqual(correlation, -0.95)


if __name__ == "__main__":
    unittest.main()
