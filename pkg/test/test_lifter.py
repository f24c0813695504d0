# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Test the lifter network, its training and the lifting interface."""

import json
import os
import tempfile
import unittest

import numpy as np
from ddt import data, ddt, idata, unpack

from pose_lifters.dataset import LiftingDataset
from pose_lifters.error_models import ErrorModelSet, MixtureErrorParams
from pose_lifters.exceptions import DomainError, FormatError, NumericalError, UsageError
from pose_lifters.lifters import (
    LifterConfig,
    LifterWeights,
    MeanPoseLifter,
    NetworkPoseLifter,
    RMSprop,
    TrainingSchedule,
    backward,
    batch_norm_forward,
    dataset_loss,
    dropout_forward,
    forward,
    load_config,
    load_weights,
    loss,
    loss_and_gradient,
    predict,
    residual_block,
    rmsprop_step,
    save_weights,
    train,
)
from pose_lifters.normalize import Pose2D, normalize_layer


def small_dataset(count, seed, joints=5):
    """Random root-relative poses seen by pinhole cameras at a few meters."""
    rng = np.random.default_rng(seed)
    relative = rng.normal(0, 10, size=(count, joints, 3))
    relative[:, 0] = 0.0
    roots = np.column_stack(
        [rng.normal(0, 300, count), rng.normal(0, 300, count), rng.uniform(3000, 6000, count)]
    )
    alphas = rng.uniform(900, 1700, count)
    principals = rng.uniform(480, 540, size=(count, 2))
    absolute = roots[:, None, :] + relative
    poses2d = alphas[:, None, None] * absolute[..., :2] / absolute[..., 2:] + principals[:, None]
    return LiftingDataset(poses2d, principals, alphas, roots, relative)


def zero_weights(config):
    weights = LifterWeights.initialize(config)
    for array in weights.learnable().values():
        array[...] = 0.0
    return weights


class TestGradients(unittest.TestCase):
    """
    Tests of the hand-derived backward pass against finite differences.
    """

    def setUp(self):
        rng = np.random.default_rng(0)
        self.config = LifterConfig(joint_count=5, hidden_dim=32, dropout_p=0.0, seed=3)
        self.weights = LifterWeights.initialize(self.config)
        for name, array in self.weights.params.items():
            if name.endswith(".running_var"):
                array[...] = rng.uniform(0.5, 2.0, array.shape)
            elif ".bn" in name:
                array[...] = rng.normal(0, 0.5, array.shape) + (1.0 if name.endswith(".scale") else 0.0)
        self.inputs = rng.normal(size=(6, self.config.input_dim))
        self.target = rng.normal(size=(6, self.config.output_dim))
        self.rng = rng

    def objective(self, training):
        values = forward(self.inputs, self.weights, training=training, update_running_stats=False)[0].values
        return 0.5 * np.sum((values - self.target) ** 2)

    def check(self, training):
        output, cache = forward(self.inputs, self.weights, training=training, update_running_stats=False)
        grads = backward(cache, output.values - self.target, self.weights)
        self.assertEqual(list(grads), self.weights.parameter_names())
        h = 1e-5
        for name, grad in grads.items():
            array = self.weights[name]
            for flat in self.rng.choice(array.size, size=min(5, array.size), replace=False):
                index = np.unravel_index(flat, array.shape)
                original = array[index]
                array[index] = original + h
                upper = self.objective(training)
                array[index] = original - h
                lower = self.objective(training)
                array[index] = original
                numeric = (upper - lower) / (2 * h)
                analytic = grad[index]
                error = abs(numeric - analytic) / max(abs(numeric) + abs(analytic), 1e-6)
                self.assertLess(error, 1e-4, msg=f"{name}{index}: {numeric} vs {analytic}")

    def test_eval_mode(self):
        """Test gradients of the eval-mode network."""
        self.check(training=False)

    def test_train_mode(self):
        """Test gradients through batch statistics."""
        self.check(training=True)

    def test_backward_needs_cache(self):
        """Test backward without a forward pass."""
        with self.assertRaises(UsageError):
            backward(None, np.zeros((1, self.config.output_dim)), self.weights)


@ddt
class TestLayers(unittest.TestCase):
    """
    Tests of layers, the loss and the optimizer.
    """

    def test_rmsprop_step(self):
        """Test one RMSprop update from a zero state."""
        theta, v = rmsprop_step(np.array([0.0]), np.array([1.0]), np.array([0.0]), lr=0.1)
        np.testing.assert_allclose(v, [0.01], rtol=1e-12)
        self.assertAlmostEqual(theta[0], -0.99999990, places=7)
        theta, v = rmsprop_step(np.array([2.0]), np.array([0.0]), np.array([0.5]), lr=0.1)
        self.assertEqual(theta[0], 2.0)
        self.assertAlmostEqual(v[0], 0.495, places=12)

    def test_rmsprop_in_place(self):
        """Test the optimizer updates the arrays it was given."""
        params = {"w": np.zeros(3)}
        optimizer = RMSprop(params, lr=0.1)
        optimizer.step({"w": np.array([1.0, 0.0, -1.0])})
        np.testing.assert_allclose(params["w"], [-0.99999990, 0.0, 0.99999990], atol=1e-7)
        np.testing.assert_allclose(optimizer.state["w"], [0.01, 0.0, 0.01])

    @idata([[[5.0, 100.0, 0.0, 0.0], 0.0], [[5.5, 100.0, 0.0, 0.0], 0.5], [[5.0, 100.004, 0.0, 0.0], 4.0]])
    @unpack
    def test_loss(self, values, expected):
        """Test the loss of a two-joint skeleton at a root depth of 5 m and alpha 1000 px."""
        relative = np.array([[[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]]])
        value = loss(np.array([values]), [5000.0], 1000.0, relative, 1e3)
        self.assertAlmostEqual(value, expected, places=6)

    def test_loss_batch_mean(self):
        """Test the loss averages over samples."""
        relative = np.zeros((2, 2, 3))
        values = np.array([[1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]])
        self.assertEqual(loss(values, [1000.0, 1000.0], [1000.0, 1000.0], relative, 1.0), 0.5)
        with self.assertRaises(DomainError):
            loss(values, [1000.0, 1000.0], [1000.0, 0.0], relative, 1.0)

    def test_lambda_scales_pose_gradient(self):
        """Test lambda scales only the pose part of the output gradient."""
        rng = np.random.default_rng(1)
        values = rng.normal(size=(4, 13))
        depth, relative = rng.normal(size=4), rng.normal(size=(4, 12))
        _, grad1 = loss_and_gradient(values, depth, relative, 1.0)
        _, grad2 = loss_and_gradient(values, depth, relative, 2.0)
        np.testing.assert_array_equal(grad2[:, 0], grad1[:, 0])
        np.testing.assert_array_equal(grad2[:, 1:], 2.0 * grad1[:, 1:])
        np.testing.assert_array_equal(np.abs(grad1), 0.25)

    def test_batch_norm_running_stats(self):
        """Test train mode updates running statistics with the unbiased variance."""
        x = np.array([[1.0], [3.0]])
        mean, var = np.zeros(1), np.ones(1)
        out, _ = batch_norm_forward(x, np.ones(1), np.zeros(1), mean, var, True, 0.1, 1e-5)
        np.testing.assert_allclose(mean, [0.2])
        np.testing.assert_allclose(var, [0.9 + 0.1 * 2.0])
        np.testing.assert_allclose(out[:, 0], [-1.0, 1.0], atol=1e-5)
        frozen_mean, frozen_var = np.zeros(1), np.ones(1)
        batch_norm_forward(x, np.ones(1), np.zeros(1), frozen_mean, frozen_var, True, 0.1, 1e-5, False)
        np.testing.assert_array_equal(frozen_mean, [0.0])

    def test_dropout_expectation(self):
        """Test inverted dropout keeps the expected activation."""
        x = np.ones(200000)
        out, mask = dropout_forward(x, 0.5, True, np.random.default_rng(2))
        self.assertTrue(set(np.unique(mask)) <= {0.0, 2.0})
        self.assertAlmostEqual(out.mean(), 1.0, delta=0.01)
        same, none = dropout_forward(x, 0.5, False, None)
        self.assertIs(same, x)
        self.assertIsNone(none)
        with self.assertRaises(UsageError):
            dropout_forward(x, 0.5, True, None)


@ddt
class TestNetwork(unittest.TestCase):
    """
    Tests of the forward pass and weight files.
    """

    def test_output_layout(self):
        """Test the output width for 17 joints and the relative pose layout."""
        config = LifterConfig(hidden_dim=64)
        weights = LifterWeights.initialize(config)
        pose = Pose2D(np.random.default_rng(3).uniform(0, 1000, size=(17, 2)))
        output, _ = forward(normalize_layer(pose, (500, 500)), weights)
        self.assertEqual(output.values.shape, (1, 49))
        self.assertEqual(output.relative.shape, (1, 17, 3))
        np.testing.assert_array_equal(output.relative[0, 0], [0, 0, 0])
        with self.assertRaises(DomainError):
            forward(np.zeros((1, 33)), weights)

    def test_zero_weights(self):
        """Test a network with zero parameters outputs zero."""
        config = LifterConfig(joint_count=5, hidden_dim=16)
        weights = zero_weights(config)
        output, _ = forward(np.random.default_rng(4).normal(size=(3, config.input_dim)), weights)
        np.testing.assert_array_equal(output.values, 0.0)

    def test_identity_block(self):
        """Test a block whose second stage outputs zero passes its input through."""
        config = LifterConfig(joint_count=5, hidden_dim=16)
        weights = LifterWeights.initialize(config)
        for name in ("linear2.weight", "linear2.bias", "bn2.scale", "bn2.shift"):
            weights[f"blocks.0.{name}"][...] = 0.0
        x = np.random.default_rng(5).normal(size=(4, 16))
        out, _ = residual_block(x, weights, 0, training=False)
        np.testing.assert_array_equal(out, x)
        with self.assertRaises(DomainError):
            residual_block(np.zeros((4, 8)), weights, 0, training=False)

    def test_network_dropout_expectation(self):
        """Test train-mode dropout with frozen batch norm averages to the eval output."""
        config = LifterConfig(joint_count=5, hidden_dim=16, num_blocks=1, dropout_p=0.5, seed=12)
        weights = LifterWeights.initialize(config)
        # Keep the second stage's pre-activations positive so its ReLU is linear in expectation.
        for name in ("linear2.weight", "linear2.bias"):
            weights[f"blocks.0.{name}"][...] = np.abs(weights[f"blocks.0.{name}"])
        weights["blocks.0.bn2.shift"][...] = 0.1
        buffers = {name: weights[name].copy() for name in weights.params if "running" in name}
        rng = np.random.default_rng(14)
        inputs = rng.normal(size=(1, config.input_dim))
        expected = forward(inputs, weights, training=False)[0].values[0]
        batch = np.repeat(inputs, 10000, axis=0)
        total = np.zeros(config.output_dim)
        for _ in range(20):
            values = forward(batch, weights, training=True, rng=rng, bn_training=False)[0].values
            total += values.sum(axis=0)
        mean = total / (20 * batch.shape[0])
        self.assertFalse(np.allclose(values[0], expected))
        self.assertLess(np.linalg.norm(mean - expected), 0.01 * np.linalg.norm(expected))
        for name, array in buffers.items():
            np.testing.assert_array_equal(weights[name], array)

    def test_deterministic(self):
        """Test initialization and eval-mode outputs are reproducible."""
        config = LifterConfig(joint_count=5, hidden_dim=16, seed=7)
        first, second = LifterWeights.initialize(config), LifterWeights.initialize(config)
        for name in first.params:
            np.testing.assert_array_equal(first[name], second[name])
        other = LifterWeights.initialize(config.replace(seed=8))
        self.assertFalse(np.array_equal(first["input.weight"], other["input.weight"]))
        inputs = np.random.default_rng(6).normal(size=(10, config.input_dim))
        np.testing.assert_allclose(
            predict(inputs, first, batch_size=3).values,
            forward(inputs, second)[0].values,
            rtol=1e-12,
            atol=1e-12,
        )

    def test_mode(self):
        """Test switching between train and eval mode."""
        weights = LifterWeights.initialize(LifterConfig(joint_count=5, hidden_dim=16))
        self.assertEqual(weights.mode, "eval")
        self.assertEqual(weights.train().mode, "train")
        self.assertFalse(weights.copy().eval().training)
        self.assertTrue(weights.training)

    def test_save_load(self):
        """Test weight files restore the network and are byte-stable."""
        config = LifterConfig(joint_count=5, hidden_dim=16, seed=9)
        weights = LifterWeights.initialize(config).train()
        with tempfile.TemporaryDirectory() as folder:
            paths = [os.path.join(folder, f"w{i}.npz") for i in range(2)]
            for path in paths:
                save_weights(weights, path)
            contents = []
            for path in paths:
                with open(path, "rb") as handle:
                    contents.append(handle.read())
            self.assertEqual(contents[0], contents[1])
            loaded = load_weights(paths[0], config.replace(dropout_p=0.1, seed=1))
            self.assertEqual(loaded.mode, "eval")
            self.assertEqual(loaded.config, config)
            for name in weights.params:
                np.testing.assert_array_equal(loaded[name], weights[name])
            with self.assertRaises(FormatError):
                load_weights(paths[0], config.replace(hidden_dim=32))
            bogus = os.path.join(folder, "bogus.npz")
            with open(bogus, "w", encoding="utf-8") as handle:
                handle.write("not a zip")
            with self.assertRaises(FormatError):
                load_weights(bogus)

    def test_unexpected_parameters(self):
        """Test weights must match their configuration."""
        config = LifterConfig(joint_count=5, hidden_dim=16)
        params = dict(LifterWeights.initialize(config).params)
        with self.assertRaises(DomainError):
            LifterWeights(config, {**params, "extra": np.zeros(1)})
        params["head.bias"] = np.zeros(3)
        with self.assertRaises(DomainError):
            LifterWeights(config, params)


@ddt
class TestConfig(unittest.TestCase):
    """
    Tests of configuration validation.
    """

    @idata(
        [
            [{"joint_count": 1}],
            [{"hidden_dim": 4}],
            [{"dropout_p": 1.0}],
            [{"loss_lambda": 0.0}],
            [{"bn_momentum": 0.0}],
            [{"root_index": 17}],
        ]
    )
    @unpack
    def test_invalid_lifter(self, change):
        """Test invalid architecture values."""
        with self.assertRaises(DomainError):
            LifterConfig(**change)

    @idata([[{"epochs": 0}], [{"batch_size": 0}], [{"learning_rate": 0.0}], [{"rho": 1.0}], [{"flip": True}]])
    @unpack
    def test_invalid_schedule(self, change):
        """Test invalid schedule values."""
        with self.assertRaises(DomainError):
            TrainingSchedule(**change)

    def test_learning_rate_drop(self):
        """Test the single learning-rate drop."""
        schedule = TrainingSchedule(epochs=60)
        self.assertEqual(schedule.decay_at, 40)
        self.assertEqual(schedule.learning_rate_at(40), 1e-3)
        self.assertEqual(schedule.learning_rate_at(41), 1e-4)
        self.assertEqual(schedule.replace(decay_epoch=0).learning_rate_at(1), 1e-4)

    def test_load_config(self):
        """Test reading a config file with aliases, defaults and unknown keys."""
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, "config.json")
            with open(path, "w", encoding="utf-8") as handle:
                json.dump({"lifter": {"lambda": 10.0, "hidden_dim": 32}, "schedule": {"epochs": 3}}, handle)
            config, schedule = load_config(path)
            self.assertEqual(config.loss_lambda, 10.0)
            self.assertEqual(config.hidden_dim, 32)
            self.assertEqual(schedule.epochs, 3)
            self.assertEqual(LifterConfig.from_dict(config.to_dict()), config)
            for document in ({"lifter": {"width": 3}}, {"optimizer": {}}, [1, 2]):
                with open(path, "w", encoding="utf-8") as handle:
                    json.dump(document, handle)
                with self.assertRaises(FormatError):
                    load_config(path)


class TestTraining(unittest.TestCase):
    """
    Tests of minibatch training.
    """

    def setUp(self):
        self.dataset = small_dataset(8, 10)
        self.config = LifterConfig(joint_count=5, hidden_dim=32, dropout_p=0.0, loss_lambda=1.0, seed=11)

    def test_memorize(self):
        """Test training on one sample without dropout drives the loss below 1e-3."""
        rng = np.random.default_rng(15)
        relative = rng.normal(0, 1, size=(1, 5, 3))
        relative[:, 0] = 0.0
        roots = np.array([[0.0, 0.0, 1200.0]])
        alphas = np.array([1200.0])
        principals = np.array([[512.0, 384.0]])
        absolute = roots[:, None, :] + relative
        poses2d = alphas[:, None, None] * absolute[..., :2] / absolute[..., 2:] + principals[:, None]
        single = LiftingDataset(poses2d, principals, alphas, roots, relative)
        config = self.config.replace(hidden_dim=8, num_blocks=1)
        schedule = TrainingSchedule(
            epochs=5000, batch_size=1, learning_rate=1e-4, final_learning_rate=3e-7, decay_epoch=2000
        )
        result = train(single, config, schedule)
        self.assertEqual(result.weights.mode, "eval")
        self.assertLess(result.final_loss, 1e-3)

    def test_bookkeeping(self):
        """Test the initial loss, learning rates and validation log."""
        schedule = TrainingSchedule(epochs=3, batch_size=3, decay_epoch=1)
        validation = small_dataset(4, 12)
        result = train(self.dataset, self.config, schedule, validation=validation)
        self.assertEqual(len(result.epoch_losses), 4)
        self.assertEqual(
            result.epoch_losses[0], dataset_loss(LifterWeights.initialize(self.config), self.dataset)
        )
        self.assertEqual(result.learning_rates, [1e-3, 1e-4, 1e-4])
        self.assertEqual([h["epoch"] for h in result.validation_history], [1, 2, 3])
        self.assertTrue(all(set(h) == {"epoch", "mpjpe", "mrpe"} for h in result.validation_history))

    def test_reproducible(self):
        """Test training with noise and flipping is reproducible from the seed."""
        models = ErrorModelSet([MixtureErrorParams(0.9, (0.0, 0.0), (1.0, 1.0), 20.0)] * 5)
        schedule = TrainingSchedule(epochs=2, batch_size=4, flip=True, pairing=((0, 0), (1, 2), (3, 4)))
        config = self.config.replace(dropout_p=0.3)
        first = train(self.dataset, config, schedule, error_models=models)
        second = train(self.dataset, config, schedule, error_models=models)
        self.assertEqual(first.epoch_losses, second.epoch_losses)
        for name in first.weights.params:
            np.testing.assert_array_equal(first.weights[name], second.weights[name])

    def test_diverging(self):
        """Test an absurd learning rate stops training with a numerical error."""
        schedule = TrainingSchedule(epochs=2, batch_size=2, learning_rate=1e300)
        with np.errstate(all="ignore"):
            with self.assertRaises(NumericalError) as context:
                train(self.dataset, self.config, schedule)
        self.assertEqual(context.exception.epoch, 1)

    def test_mismatch(self):
        """Test datasets and error models that do not fit the network."""
        schedule = TrainingSchedule(epochs=1)
        with self.assertRaises(DomainError):
            train(self.dataset, self.config.replace(joint_count=6), schedule)
        with self.assertRaises(DomainError):
            train(self.dataset.subset([]), self.config, schedule)
        models = ErrorModelSet([MixtureErrorParams(1.0, (0.0, 0.0), (1.0, 1.0))] * 4)
        with self.assertRaises(DomainError):
            train(self.dataset, self.config, schedule, error_models=models)


@ddt
class TestPoseLifter(unittest.TestCase):
    """
    Tests of lifting 2D poses to absolute poses.
    """

    def setUp(self):
        self.pose2d = np.array([[612.0, 384.0], [650.0, 300.0], [580.0, 300.0], [640.0, 500.0], [590.0, 500.0]])

    def constant_lifter(self, depth, **changes):
        config = LifterConfig(joint_count=5, hidden_dim=16, **changes)
        weights = zero_weights(config)
        weights["head.bias"][0] = depth
        return NetworkPoseLifter(weights)

    def test_canonical(self):
        """Test a canonical depth of 4 mm/px becomes a root 4 m away."""
        result = self.constant_lifter(4.0).lift(self.pose2d, (512.0, 384.0), 1000.0)
        np.testing.assert_allclose(result.root, [[400.0, 0.0, 4000.0]])
        np.testing.assert_allclose(result.canonical_depth, [4.0])
        np.testing.assert_allclose(result.absolute[0], np.tile([400.0, 0.0, 4000.0], (5, 1)))

    @data(800.0, 1600.0)
    def test_focal_invariance(self, alpha):
        """Test the canonical output does not depend on the focal length."""
        lifter = self.constant_lifter(4.0)
        result = lifter.lift(self.pose2d, (512.0, 384.0), alpha)
        np.testing.assert_allclose(result.canonical_depth, [4.0])
        self.assertAlmostEqual(result.root_depth[0], 4.0 * alpha)

    def test_without_focal_length(self):
        """Test lifting without the focal length returns only canonical quantities."""
        result = self.constant_lifter(4.0).lift(self.pose2d[None], np.array([[512.0, 384.0]]))
        self.assertIsNone(result.root)
        self.assertIsNone(result.absolute)
        np.testing.assert_allclose(result.canonical_depth, [4.0])
        self.assertEqual(result.relative.shape, (1, 5, 3))

    def test_metric_depth(self):
        """Test a network regressing metric depth."""
        lifter = self.constant_lifter(5.0, use_canonical_depth=False, depth_scale=1000.0)
        result = lifter.lift(self.pose2d, (512.0, 384.0), 1000.0)
        np.testing.assert_allclose(result.root, [[500.0, 0.0, 5000.0]])
        np.testing.assert_allclose(result.canonical_depth, [5.0])
        unknown = lifter.lift(self.pose2d, (512.0, 384.0))
        self.assertIsNone(unknown.canonical_depth)
        np.testing.assert_allclose(unknown.root_depth, [5000.0])

    def test_invalid(self):
        """Test joint-count mismatches and invalid focal lengths."""
        lifter = self.constant_lifter(4.0)
        with self.assertRaises(DomainError):
            lifter.lift(self.pose2d[:4], (512.0, 384.0), 1000.0)
        with self.assertRaises(DomainError):
            lifter.lift(self.pose2d, (512.0, 384.0), 0.0)

    @idata([[(64.0, -32.0)], [(300.0, 1100.0)]])
    @unpack
    def test_translation_without_loc_scale(self, offset):
        """Test a network without location and scale inputs ignores where the pose lies in the image."""
        pose2d = np.array([[612.0, 384.0], [650.0, 300.0], [580.0, 302.0], [641.0, 500.0]])
        config = LifterConfig(joint_count=4, hidden_dim=16, use_loc_scale=False, seed=5)
        lifter = NetworkPoseLifter(LifterWeights.initialize(config))
        base = lifter.lift(pose2d, (512.0, 384.0))
        moved = lifter.lift(pose2d + offset, (512.0, 384.0))
        np.testing.assert_array_equal(moved.canonical_depth, base.canonical_depth)
        np.testing.assert_array_equal(moved.relative, base.relative)
        located = NetworkPoseLifter(LifterWeights.initialize(config.replace(use_loc_scale=True)))
        self.assertNotEqual(
            located.lift(pose2d + offset, (512.0, 384.0)).canonical_depth[0],
            located.lift(pose2d, (512.0, 384.0)).canonical_depth[0],
        )

    def test_mean_pose(self):
        """Test the mean-pose baseline."""
        dataset = small_dataset(6, 13)
        lifter = MeanPoseLifter.fit(dataset)
        result = lifter.lift(dataset.poses2d, dataset.principals, dataset.alphas)
        mean_depth = np.mean(dataset.canonical_depths)
        np.testing.assert_allclose(result.root_depth, dataset.alphas * mean_depth)
        np.testing.assert_allclose(result.relative, np.broadcast_to(dataset.relative3d.mean(axis=0), (6, 5, 3)))
        with self.assertRaises(DomainError):
            MeanPoseLifter.fit(dataset.subset([]))


if __name__ == "__main__":
    unittest.main()
