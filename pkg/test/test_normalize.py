# This code is licensed under the Apache License, Version 2.0. You may
# obtain a copy of this license in the LICENSE.txt file in the root directory
# of this source tree or at http://www.apache.org/licenses/LICENSE-2.0.

"""Test the normalization layer."""

import unittest

import numpy as np
from ddt import ddt, idata, unpack
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pose_lifters.exceptions import DomainError
from pose_lifters.normalize import (
    Pose2D,
    input_dim,
    normalize_batch,
    normalize_layer,
    shift_principal,
    statistics,
)

coordinates = st.floats(-2000, 2000, allow_nan=False, allow_infinity=False)


@ddt
class TestStatistics(unittest.TestCase):
    """
    Tests of the principal point shift and the pose statistics.
    """

    @idata(
        [
            [(512, 384), (512, 384), (0, 0)],
            [(100, 50), (0, 0), (100, 50)],
            [(10, -4), (3, 1), (7, -5)],
        ]
    )
    @unpack
    def test_shift_principal(self, point, principal, expected):
        """Test shifting every joint by the principal point."""
        shifted = shift_principal(Pose2D([point, (0, 0)]), principal)
        np.testing.assert_array_equal(shifted.joints, [expected, -np.asarray(principal)])

    @idata(
        [
            [[(-1, 0), (3, 0)], (1, 0), 2.0],
            [[(5, 5), (5, 5), (5, 5)], (5, 5), 0.0],
            [[(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)], (0, 0), np.sqrt(0.5)],
        ]
    )
    @unpack
    def test_statistics(self, joints, location, scale):
        """Test the mean vector and the scalar scale."""
        u, sigma = statistics(Pose2D(joints))
        np.testing.assert_array_almost_equal(u, location, decimal=12)
        self.assertAlmostEqual(sigma, scale, places=12)

    @idata([[np.zeros((0, 2))], [[(1.0, 2.0)]], [[(0.0, 0.0), (1.0, float("nan"))]], [np.zeros((3, 3))]])
    @unpack
    def test_invalid_pose(self, joints):
        """Test poses with fewer than two joints or non-finite coordinates."""
        with self.assertRaises(DomainError):
            Pose2D(joints)


@ddt
class TestNormalizeLayer(unittest.TestCase):
    """
    Tests of the full normalization layer.
    """

    def test_two_joints(self):
        """Test the hand-computed example."""
        result = normalize_layer(Pose2D([(-1, 0), (3, 0)]), (0, 0))
        np.testing.assert_array_equal(result.normalized, [[-1, 0], [1, 0]])
        np.testing.assert_array_equal(result.location, [1, 0])
        self.assertEqual(result.scale, 2.0)
        np.testing.assert_array_equal(result.to_vector(), [-1, 0, 1, 0, 1, 0, 2])
        np.testing.assert_array_equal(result.to_vector(use_loc_scale=False), [-1, 0, 1, 0])
        self.assertEqual(len(result), input_dim(2))
        plain = normalize_layer(Pose2D([(-1, 0), (3, 0)]), (0, 0), use_loc_scale=False)
        self.assertEqual(len(plain), input_dim(2, use_loc_scale=False))
        self.assertEqual(len(plain.to_vector()), len(plain))
        np.testing.assert_array_equal(plain.to_vector(), [-1, 0, 1, 0])
        np.testing.assert_array_equal(plain.to_vector(use_loc_scale=True), result.to_vector())

    def test_degenerate(self):
        """Test a pose whose joints coincide is rejected."""
        with self.assertRaises(DomainError):
            normalize_layer(Pose2D([(4, 4), (4, 4), (4, 4)]), (0, 0))
        with self.assertRaises(DomainError):
            normalize_batch(np.array([[[0, 0], [1, 1]], [[2, 2], [2, 2]]], dtype=float), (0, 0))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (6, 2), elements=coordinates), coordinates, coordinates)
    def test_fixed_point(self, joints, cx, cy):
        """Test the normalized pose has zero mean and unit scale."""
        if statistics(joints)[1] < 1.0:
            return
        result = normalize_layer(Pose2D(joints), (cx, cy))
        u, sigma = statistics(result.normalized)
        np.testing.assert_allclose(u, 0.0, atol=1e-9)
        self.assertAlmostEqual(sigma, 1.0, delta=1e-9)

    @idata([[(13.0, -7.5)], [(-300.0, 1200.0)]])
    @unpack
    def test_translation_covariance(self, offset):
        """Test translating the pose moves only the location."""
        joints = np.array([[10.0, 20.0], [40.0, -5.0], [25.0, 60.0], [-8.0, 3.0]])
        base = normalize_layer(Pose2D(joints), (320, 240))
        moved = normalize_layer(Pose2D(joints + offset), (320, 240))
        np.testing.assert_allclose(moved.location - base.location, offset, atol=1e-9)
        np.testing.assert_allclose(moved.normalized, base.normalized, atol=1e-12)
        self.assertAlmostEqual(moved.scale, base.scale, places=9)

    @idata([[0.25], [3.0]])
    @unpack
    def test_scale_covariance(self, factor):
        """Test scaling the pose about its mean scales only sigma."""
        joints = np.array([[10.0, 20.0], [40.0, -5.0], [25.0, 60.0], [-8.0, 3.0]])
        mean = joints.mean(axis=0)
        base = normalize_layer(Pose2D(joints), (0, 0))
        scaled = normalize_layer(Pose2D(mean + factor * (joints - mean)), (0, 0))
        self.assertAlmostEqual(scaled.scale, factor * base.scale, places=9)
        np.testing.assert_allclose(scaled.normalized, base.normalized, atol=1e-12)

    def test_batch_matches_single(self):
        """Test the batched layer reproduces the per-pose layer row by row."""
        rng = np.random.default_rng(3)
        poses = rng.uniform(0, 1000, size=(8, 17, 2))
        principals = rng.uniform(400, 600, size=(8, 2))
        batch = normalize_batch(poses, principals)
        self.assertEqual(batch.shape, (8, input_dim(17)))
        for i in range(8):
            single = normalize_layer(Pose2D(poses[i]), principals[i]).to_vector()
            np.testing.assert_allclose(batch[i], single, rtol=1e-12, atol=1e-12)
        plain = normalize_batch(poses, principals, use_loc_scale=False)
        np.testing.assert_array_equal(plain, batch[:, : 2 * 17])

    def test_batch_shape(self):
        """Test a malformed batch is rejected."""
        with self.assertRaises(DomainError):
            normalize_batch(np.zeros((4, 17)), (0, 0))


if __name__ == "__main__":
    unittest.main()
