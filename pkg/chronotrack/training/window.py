"""
Training windows: sampling consecutive frames, preparing their search regions
and running the full pipeline over them to produce a ``LossBreakdown``.

Frame 1 of a window is the annotated frame and initialises memory from its
ground-truth mask. Every later frame is cropped around the previous
ground-truth box perturbed by seeded jitter, decoded, scored and folded into
memory with its predicted targetness.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from chronotrack.autodiff import ops
from chronotrack.exceptions import NoEligibleSequenceError
from chronotrack.geometry import Box3D, box_to_local, build_correspondences, canonicalize
from chronotrack.memory import init_memory, refine, update_memory
from chronotrack.objectives import (
    build_transitions, combine, decoder_loss, mcc_loss, temporal_consistency_loss, zero,
)
from chronotrack.perception.decoder import decode
from chronotrack.perception.encoder import encode
from chronotrack.tracker import crop_and_resample, seed_mask
from chronotrack.utils import derive_seed


logger = logging.getLogger(__name__)


@dataclass
class WindowSample:
    name: str
    start: int
    frames: list

    def __len__(self):
        return len(self.frames)


@dataclass
class PreparedFrame:
    points: np.ndarray
    reference: Box3D
    gt_box: Box3D


@dataclass
class PreparedWindow:
    name: str
    start: int
    frames: List[PreparedFrame]


def sample_window(dataset, window, seed):
    """
    A uniformly chosen sequence with at least ``window`` frames, then a uniform
    start offset.
    """
    eligible = [sequence for sequence in dataset if len(sequence) >= window]
    if not eligible:
        raise NoEligibleSequenceError('no sequence has %d or more frames' % window)
    rng = np.random.default_rng(seed)
    sequence = eligible[int(rng.integers(len(eligible)))]
    start = int(rng.integers(len(sequence) - window + 1))
    return WindowSample(sequence.name, start, sequence.frames[start:start + window])


def jitter_box(box, config, rng):
    offset = rng.normal(0.0, config.box_jitter_xy, 2) if config.box_jitter_xy else np.zeros(2)
    yaw = rng.normal(0.0, config.box_jitter_heading) if config.box_jitter_heading else 0.0
    return Box3D((box.center[0] + offset[0], box.center[1] + offset[1], box.center[2]), box.heading + yaw, box.size)


def prepare_window(sample, tracker_config, train_config, seed):
    """
    Crop and resample every frame of ``sample``; the points come back in the
    canonical frame of their reference box.
    """
    rng = np.random.default_rng(derive_seed('jitter', seed))
    prepared = []
    for t, frame in enumerate(sample.frames):
        reference = frame.gt_box if t == 0 else jitter_box(sample.frames[t - 1].gt_box, train_config, rng)
        region = crop_and_resample(frame.points, reference, tracker_config, derive_seed('crop', seed, t))
        prepared.append(PreparedFrame(canonicalize(region.points, reference), reference, frame.gt_box))
    return PreparedWindow(sample.name, sample.start, prepared)


def first_frame_mask(seeds, gt_box, reference, name=''):
    """
    Seed mask for the frame that initialises memory during training. A window
    whose downsampling left no seed inside the box takes the seed nearest the
    box center instead of being dropped; inference raises in that case.
    """
    mask = seed_mask(seeds, gt_box, reference)
    if not mask.any():
        logger.warning('%s: no seed inside the first box, using the seed nearest its center', name)
        local = np.array(box_to_local(gt_box, reference).center)
        mask[np.argmin(np.linalg.norm(seeds - local, axis=1))] = True
    return mask


def window_forward(graph, window, tracker_config, train_config):
    """
    Forward the whole window on ``graph`` and return its ``LossBreakdown``.
    """
    first = window.frames[0]
    feature_map = encode(graph, first.points, tracker_config)
    mask = first_frame_mask(feature_map.seeds, first.gt_box, first.reference, window.name)
    memory = init_memory(graph, feature_map, mask, tracker_config)

    seeds, masks, features, tokens = [feature_map.seeds], [mask], [feature_map.features], [memory.fg_tokens]
    local_boxes = [box_to_local(first.gt_box, first.reference)]
    dec_terms = []
    for frame in window.frames[1:]:
        feature_map = encode(graph, frame.points, tracker_config)
        refined = refine(graph, feature_map, memory, tracker_config)
        prediction = decode(graph, feature_map.with_features(refined), frame.reference, tracker_config)
        mask = seed_mask(feature_map.seeds, frame.gt_box, frame.reference)
        dec_terms.append(decoder_loss(prediction, frame.gt_box, mask, train_config.lambda_m, train_config.lambda_c))
        memory = update_memory(graph, memory, feature_map, prediction.targetness, tracker_config.tau_mask,
                               tracker_config)
        seeds.append(feature_map.seeds)
        local_boxes.append(box_to_local(frame.gt_box, frame.reference))
        masks.append(mask)
        features.append(feature_map.features)
        tokens.append(memory.fg_tokens)

    foreground = [np.flatnonzero(m) for m in masks]
    if train_config.use_tc:
        correspondences = build_correspondences(seeds, local_boxes, masks, train_config.tau_dist)
        fg_features = [ops.gather_rows(f, index) for f, index in zip(features, foreground)]
        tc = temporal_consistency_loss(fg_features, correspondences)
    else:
        tc = zero()
    if train_config.use_mcc:
        matrices = [build_transitions(x, f, train_config.tau_cycle) for x, f in zip(tokens, features)]
        cycle, fg, _ = mcc_loss(matrices, foreground)
    else:
        cycle, fg = zero(), zero()
    return combine(dec_terms, tc, cycle, fg)
