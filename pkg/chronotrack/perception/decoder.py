"""
Proposal-free decode head: per-seed targetness plus a per-seed vote for the box
offset, pooled with targetness weights.

Seeds are expected in the canonical frame of the previous box, so a vote is
``(x, y, z, theta)`` relative to that box.
"""
import logging
from dataclasses import dataclass

import numpy as np

from chronotrack.autodiff import nn, ops
from chronotrack.autodiff.graph import Tensor
from chronotrack.geometry import Box3D, box_from_local


logger = logging.getLogger(__name__)

ZERO_MASS = 1e-12


@dataclass
class Prediction:
    targetness: Tensor
    votes: Tensor
    weights: Tensor
    offset: Tensor
    seeds: np.ndarray
    reference: Box3D
    box: Box3D

    @property
    def scores(self):
        return self.targetness.value

    @property
    def max_targetness(self):
        return float(self.scores.max()) if self.scores.size else 0.0


def init_decoder(params, config, rng):
    nn.init_linear(params, 'decoder.targetness', config.dim, 1, rng)
    nn.init_linear(params, 'decoder.vote.hidden', config.dim, config.dim, rng)
    nn.init_linear(params, 'decoder.vote.out', config.dim, 4, rng, gain=0.1)


def pool_votes(targetness, votes):
    """
    Targetness-weighted mean of the votes; uniform weights when every score is
    numerically zero.
    """
    count = targetness.shape[0]
    total = ops.sum_reduce(targetness)
    if total.item() < ZERO_MASS:
        logger.warning('all targetness scores are zero, pooling votes uniformly')
        weights = targetness.graph.constant(np.full(count, 1.0 / count)) if targetness.graph else \
            Tensor(np.full(count, 1.0 / count))
    else:
        weights = ops.div(targetness, total)
    offset = ops.reshape(ops.matmul(ops.reshape(weights, (1, count)), votes), (4,))
    return weights, offset


def decode(graph, refined, previous_box, config):
    features = refined.features
    count = features.shape[0]
    targetness = ops.reshape(ops.sigmoid(nn.linear(graph, 'decoder.targetness', features)), (count,))
    hidden = ops.leaky_relu(nn.linear(graph, 'decoder.vote.hidden', features), 0.2)
    anchors = np.zeros((count, 4))
    anchors[:, :3] = refined.seeds
    votes = ops.add(nn.linear(graph, 'decoder.vote.out', hidden), anchors)
    weights, offset = pool_votes(targetness, votes)
    local = Box3D(offset.value[:3], offset.value[3], previous_box.size)
    return Prediction(targetness, votes, weights, offset, refined.seeds, previous_box,
                      box_from_local(local, previous_box))
