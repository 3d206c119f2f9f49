"""
Point-feature encoder: three edge-convolution stages, each followed by 2x
farthest-point downsampling (N points in, ceil(N/8) seeds out).
"""
from dataclasses import dataclass

import numpy as np

from chronotrack.autodiff import nn, ops
from chronotrack.autodiff.graph import Tensor
from chronotrack.exceptions import EncoderError
from chronotrack.perception.sampling import farthest_point_sample, knn_indices


@dataclass
class FeatureMap:
    seeds: np.ndarray
    features: Tensor

    def __len__(self):
        return len(self.seeds)

    def with_features(self, features):
        return FeatureMap(self.seeds, features)


def init_encoder(params, config, rng):
    width_in = 3
    for stage, width in enumerate(config.encoder_widths):
        nn.init_linear(params, 'encoder.stage%d' % stage, 2 * width_in, width, rng)
        width_in = width


def edge_conv(graph, name, coords, features, k):
    count = len(coords)
    neighbours = knn_indices(coords, k)
    centres = np.repeat(np.arange(count)[:, None], k, axis=1)
    centre = ops.gather_rows(features, centres)
    edge = ops.concat([centre, ops.sub(ops.gather_rows(features, neighbours), centre)], axis=2)
    flat = ops.reshape(edge, (count * k, edge.shape[2]))
    hidden = ops.leaky_relu(nn.linear(graph, name, flat), 0.2)
    return ops.max_reduce(ops.reshape(hidden, (count, k, hidden.shape[1])), axis=1)


def encode(graph, points, config):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) < config.knn_k + 1:
        raise EncoderError('encoder needs at least %d points, got %d' % (config.knn_k + 1, len(points)))
    coords = points
    features = graph.constant(points)
    for stage in range(len(config.encoder_widths)):
        k = min(config.knn_k, len(coords) - 1)
        features = edge_conv(graph, 'encoder.stage%d' % stage, coords, features, k)
        keep = farthest_point_sample(coords, -(-len(coords) // 2))
        features = ops.gather_rows(features, keep)
        coords = coords[keep]
    return FeatureMap(coords, features)
