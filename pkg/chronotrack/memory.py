"""
Long-term foreground memory (K x D tokens) and short-term background memory.

The memory updater ``mu`` and the feature refiner ``mfr`` are stacks of
transformer layers. ``mu`` serves both the first-frame initialisation and every
later update, with one set of weights.
"""
import hashlib
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from chronotrack.autodiff import nn, ops
from chronotrack.autodiff.graph import Tensor
from chronotrack.exceptions import InitializationError
from chronotrack.utils import float_dtype


@dataclass
class MemoryState:
    fg_tokens: Tensor
    bg_history: Tuple[Tensor, ...]
    frame_index: int

    @property
    def bg_features(self):
        parts = [part for part in self.bg_history if part.shape[0]]
        if not parts:
            width = self.fg_tokens.shape[1]
            return Tensor(np.zeros((0, width), dtype=self.fg_tokens.value.dtype))
        return parts[0] if len(parts) == 1 else ops.concat(parts, axis=0)

    @property
    def element_count(self):
        return int(self.fg_tokens.size)

    def checksum(self):
        digest = hashlib.sha256(np.ascontiguousarray(self.fg_tokens.value).tobytes())
        for part in self.bg_history:
            digest.update(np.ascontiguousarray(part.value).tobytes())
        digest.update(str(self.frame_index).encode('ascii'))
        return digest.hexdigest()


def init_memory_params(params, config, rng):
    params['fg_tokens'] = rng.standard_normal((config.num_tokens, config.dim)).astype(float_dtype())
    nn.init_transformer_stack(params, 'mu', config.dim, config.mu_layers, rng, mlp_ratio=config.mlp_ratio)
    nn.init_linear(params, 'mfr.query', config.dim + 3, config.dim, rng)
    nn.init_transformer_stack(params, 'mfr', config.dim, config.mfr_layers, rng, mlp_ratio=config.mlp_ratio)


def init_memory(graph, first_frame, gt_mask, config):
    gt_mask = np.asarray(gt_mask, dtype=bool)
    foreground = np.flatnonzero(gt_mask)
    if not foreground.size:
        raise InitializationError('the first frame has no foreground seeds inside the ground-truth box')
    features = first_frame.features
    tokens = nn.transformer_stack(graph, 'mu', graph.param('fg_tokens'), ops.gather_rows(features, foreground),
                                  config.mu_layers, config.heads)
    background = ops.gather_rows(features, np.flatnonzero(~gt_mask))
    return MemoryState(tokens, (background,), 1)


def refine(graph, current, memory, config):
    """
    Target-aware features: the current seed features (with their coordinates
    appended) attend to the foreground tokens and the background memory.
    """
    background = memory.bg_features
    if background.shape[0]:
        keys_values = ops.concat([memory.fg_tokens, background], axis=0)
    else:
        keys_values = memory.fg_tokens
    queries = nn.linear(graph, 'mfr.query', ops.concat([current.features, graph.constant(current.seeds)], axis=1))
    return nn.transformer_stack(graph, 'mfr', queries, keys_values, config.mfr_layers, config.heads)


def update_memory(graph, memory, current, targetness, tau_mask, config):
    """
    Fold the seeds scored at or above ``tau_mask`` into the tokens; the rest
    become the newest background memory.
    """
    scores = np.asarray(getattr(targetness, 'value', targetness)).reshape(-1)
    chosen = scores >= tau_mask
    previous = memory.fg_tokens
    foreground = np.flatnonzero(chosen)
    if foreground.size:
        keys_values = ops.concat([previous, ops.gather_rows(current.features, foreground)], axis=0)
    else:
        keys_values = previous
    tokens = nn.transformer_stack(graph, 'mu', previous, keys_values, config.mu_layers, config.heads)
    background = ops.gather_rows(current.features, np.flatnonzero(~chosen))
    history = (memory.bg_history + (background,))[-config.bg_capacity:]
    return MemoryState(tokens, history, memory.frame_index + 1)
