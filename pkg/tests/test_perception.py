import unittest

import numpy as np

from chronotrack.autodiff import ops
from chronotrack.autodiff.graph import Graph
from chronotrack.exceptions import EncoderError
from chronotrack.geometry import Box3D
from chronotrack.model import build_parameters, parameter_count, parameter_shapes
from chronotrack.perception.decoder import decode, pool_votes
from chronotrack.perception.encoder import FeatureMap, encode
from chronotrack.perception.sampling import farthest_point_sample, knn_indices
from tests.settings import MICRO_TRACKER, SMALL_TRACKER
from tests.utils.context_managers import SilencedLogging


class SamplingTests(unittest.TestCase):

    def test_farthest_point_sample_on_a_line(self):
        points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        # starts at the largest norm, then the farthest from it
        self.assertEqual(farthest_point_sample(points, 2).tolist(), [3, 0])
        self.assertEqual(farthest_point_sample(points, 3).tolist(), [3, 0, 2])

    def test_farthest_point_sample_bounds(self):
        points = np.random.default_rng(0).normal(size=(10, 3))
        self.assertEqual(len(farthest_point_sample(points, 0)), 0)
        chosen = farthest_point_sample(points, 20)
        self.assertEqual(sorted(chosen.tolist()), list(range(10)))
        self.assertEqual(len(set(farthest_point_sample(points, 5).tolist())), 5)

    def test_knn_excludes_self(self):
        points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [6.0, 0.0, 0.0]])
        neighbours = knn_indices(points, 2)
        self.assertEqual(neighbours.tolist(), [[1, 2], [0, 2], [1, 0], [2, 1]])


class EncoderTests(unittest.TestCase):

    def test_seed_count(self):
        params = build_parameters(SMALL_TRACKER)
        points = np.random.default_rng(1).normal(size=(SMALL_TRACKER.num_points, 3))
        feature_map = encode(Graph(params, record=False), points, SMALL_TRACKER)
        self.assertEqual(len(feature_map), SMALL_TRACKER.num_seeds)
        self.assertEqual(feature_map.features.shape, (SMALL_TRACKER.num_seeds, SMALL_TRACKER.dim))
        # seeds are a subset of the input points
        for seed in feature_map.seeds:
            self.assertTrue(np.any(np.all(points == seed, axis=1)))

    def test_micro_encoder(self):
        params = build_parameters(MICRO_TRACKER)
        points = np.random.default_rng(2).normal(size=(16, 3))
        feature_map = encode(Graph(params, record=False), points, MICRO_TRACKER)
        self.assertEqual(feature_map.features.shape, (2, 4))

    def test_too_few_points(self):
        params = build_parameters(MICRO_TRACKER)
        with self.assertRaises(EncoderError):
            encode(Graph(params, record=False), np.zeros((MICRO_TRACKER.knn_k, 3)), MICRO_TRACKER)

    def test_deterministic(self):
        params = build_parameters(MICRO_TRACKER, seed=3)
        points = np.random.default_rng(3).normal(size=(16, 3))
        first = encode(Graph(params, record=False), points, MICRO_TRACKER)
        second = encode(Graph(params, record=False), points, MICRO_TRACKER)
        np.testing.assert_array_equal(first.features.value, second.features.value)

    def test_parameters(self):
        params = build_parameters(MICRO_TRACKER)
        shapes = parameter_shapes(params)
        self.assertEqual(shapes['fg_tokens'], (2, 4))
        self.assertEqual(shapes['decoder.vote.out.weight'][1], 4)
        self.assertEqual(parameter_count(params), sum(int(np.prod(s)) for s in shapes.values()))
        np.testing.assert_array_equal(build_parameters(MICRO_TRACKER, seed=5)['fg_tokens'],
                                      build_parameters(MICRO_TRACKER, seed=5)['fg_tokens'])


class DecoderTests(unittest.TestCase):

    def test_pool_votes_weighted(self):
        targetness = ops.constant(np.array([1.0, 3.0]))
        votes = ops.constant(np.array([[0.0, 0.0, 0.0, 0.0], [4.0, 8.0, 0.0, 0.4]]))
        weights, offset = pool_votes(targetness, votes)
        np.testing.assert_allclose(weights.value, [0.25, 0.75])
        np.testing.assert_allclose(offset.value, [3.0, 6.0, 0.0, 0.3])

    def test_pool_votes_uniform_fallback(self):
        targetness = ops.constant(np.zeros(4))
        votes = ops.constant(np.arange(16.0).reshape(4, 4))
        with SilencedLogging():
            weights, offset = pool_votes(targetness, votes)
        np.testing.assert_allclose(weights.value, np.full(4, 0.25))
        np.testing.assert_allclose(offset.value, votes.value.mean(axis=0))

    def test_decode_keeps_box_size(self):
        params = build_parameters(MICRO_TRACKER)
        graph = Graph(params, record=False)
        previous = Box3D((5.0, 1.0, 0.75), 0.4, (1.8, 4.2, 1.5))
        points = np.random.default_rng(4).normal(size=(16, 3))
        feature_map = encode(graph, points, MICRO_TRACKER)
        prediction = decode(graph, feature_map, previous, MICRO_TRACKER)
        self.assertEqual(prediction.box.size, previous.size)
        self.assertEqual(prediction.targetness.shape, (2,))
        self.assertTrue(np.all((prediction.scores > 0) & (prediction.scores < 1)))
        self.assertAlmostEqual(float(prediction.weights.value.sum()), 1.0)
        self.assertEqual(prediction.max_targetness, float(prediction.scores.max()))

    def test_zero_votes_keep_the_previous_box(self):
        params = build_parameters(MICRO_TRACKER)
        params['decoder.vote.out.weight'] = np.zeros_like(params['decoder.vote.out.weight'])
        graph = Graph(params, record=False)
        previous = Box3D((5.0, 1.0, 0.75), 0.4, (1.8, 4.2, 1.5))
        features = ops.constant(np.random.default_rng(5).normal(size=(2, MICRO_TRACKER.dim)))
        prediction = decode(graph, FeatureMap(np.zeros((2, 3)), features), previous, MICRO_TRACKER)
        np.testing.assert_allclose(prediction.offset.value, np.zeros(4))
        np.testing.assert_allclose(prediction.box.center, previous.center)
        self.assertAlmostEqual(prediction.box.heading, previous.heading)

    def test_feature_map_with_features(self):
        feature_map = FeatureMap(np.zeros((2, 3)), ops.constant(np.zeros((2, 4))))
        replaced = feature_map.with_features(ops.constant(np.ones((2, 4))))
        self.assertIs(replaced.seeds, feature_map.seeds)
        self.assertEqual(float(replaced.features.value.sum()), 8.0)
