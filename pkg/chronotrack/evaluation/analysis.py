"""
Studies run on top of the tracker: evaluation over a set of sequences,
feature-consistency profiles, memory footprint, token diversity, component
ablation, hyperparameter sweeps and the frozen-template baseline.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from chronotrack.autodiff.graph import Graph
from chronotrack.config import TrackerConfig, parse_value
from chronotrack.evaluation.metrics import OpeResult, TrackletResult, ope
from chronotrack.exceptions import ConfigError
from chronotrack.geometry import box_to_local, build_correspondences, canonicalize
from chronotrack.perception.encoder import encode
from chronotrack.settings import settings
from chronotrack.tracker import Tracker, crop_and_resample, seed_mask
from chronotrack.training.loop import train
from chronotrack.utils import derive_seed


logger = logging.getLogger(__name__)

SWEEP_ALIASES = {'K': 'num_tokens', 'k': 'num_tokens'}


def track_one(params, config, sequence):
    tracker = Tracker(params, config)
    boxes = tracker.track_sequence(sequence)
    result = ope(boxes, sequence.boxes[1:], sequence.name)
    seconds = tracker.seconds_per_frame
    return boxes, TrackletResult(sequence.name, sequence.category, len(sequence), result, seconds)


def evaluate(params, config, sequences, workers=None):
    """
    Track every sequence against the shared ``params``; results keep the input order.
    """
    workers = workers or settings.WORKERS
    usable = [sequence for sequence in sequences if len(sequence) >= 2]

    def run(sequence):
        return track_one(params, config, sequence)[1]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, usable))
    return [run(sequence) for sequence in usable]


def mean_success(tracklets):
    return OpeResult.merge([t.result for t in tracklets])


# consistency

@dataclass
class FrameFeatures:
    seeds: np.ndarray
    features: np.ndarray
    gt_box: object
    mask: np.ndarray


def sequence_features(params, config, sequence):
    """
    Encoder features of every frame, cropped around that frame's ground-truth
    box and expressed in its canonical frame.
    """
    frames = []
    for t, frame in enumerate(sequence.frames, 1):
        region = crop_and_resample(frame.points, frame.gt_box, config, derive_seed(sequence.name, 'profile', t))
        feature_map = encode(Graph(params, record=False), canonicalize(region.points, frame.gt_box), config)
        local = box_to_local(frame.gt_box, frame.gt_box)
        frames.append(FrameFeatures(feature_map.seeds, feature_map.features.value, local,
                                    seed_mask(feature_map.seeds, frame.gt_box, frame.gt_box)))
    return frames


def _cosine_rows(a, b, eps=1e-8):
    return np.sum(a * b, axis=1) / ((np.linalg.norm(a, axis=1) + eps) * (np.linalg.norm(b, axis=1) + eps))


def profile_from_features(frames_per_sequence, max_gap, tau_dist):
    """
    ``{gap: mean cosine similarity}`` between corresponding foreground features
    ``gap`` frames apart, pooled over sequences and frame pairs. Gaps without
    correspondences are left out.
    """
    totals = {}
    for frames in frames_per_sequence:
        for t in range(len(frames)):
            for gap in range(1, max_gap + 1):
                if t + gap >= len(frames):
                    break
                pair = (frames[t], frames[t + gap])
                matches = build_correspondences([f.seeds for f in pair], [f.gt_box for f in pair],
                                                [f.mask for f in pair], tau_dist)
                if not len(matches):
                    continue
                source = pair[0].features[pair[0].mask][matches.source_index]
                target = pair[1].features[pair[1].mask][matches.target_index]
                similarity = _cosine_rows(source, target)
                total, count = totals.get(gap, (0.0, 0))
                totals[gap] = (total + float(similarity.sum()), count + similarity.size)
    return {gap: total / count for gap, (total, count) in sorted(totals.items())}


def consistency_profile(params, config, sequences, max_gap, tau_dist=0.3):
    return profile_from_features([sequence_features(params, config, s) for s in sequences], max_gap, tau_dist)


# memory

def memory_footprint(config, capacities, num_seeds=None):
    """
    Stored feature elements per temporal capacity ``c``: the token memory keeps
    ``K * D`` at every ``c``, a point-level memory grows as ``c * N' * D``.
    """
    num_seeds = num_seeds or config.num_seeds
    rows = []
    for capacity in capacities:
        tokens = config.num_tokens * config.dim
        baseline = capacity * num_seeds * config.dim
        rows.append({'capacity': capacity, 'token': tokens, 'baseline': baseline, 'ratio': baseline / tokens})
    return rows


def rollout_element_counts(params, config, sequence):
    """
    Foreground memory element count after initialisation and after every step.
    """
    tracker = Tracker(params, config)
    first = sequence.frames[0]
    state = tracker.init_track(first.points, first.gt_box, sequence.name)
    counts = [state.memory.element_count]
    for frame in sequence.frames[1:]:
        _, state = tracker.step(state, frame.points)
        counts.append(state.memory.element_count)
    return counts


def token_assignment(tokens, features):
    """
    ``(distinct tokens used, entropy in nats)`` when every feature row goes to
    its most cosine-similar token.
    """
    tokens = np.asarray(tokens)
    features = np.asarray(features)
    if not len(features):
        return 0, 0.0
    normalised_tokens = tokens / (np.linalg.norm(tokens, axis=1, keepdims=True) + 1e-8)
    normalised = features / (np.linalg.norm(features, axis=1, keepdims=True) + 1e-8)
    chosen = np.argmax(normalised @ normalised_tokens.T, axis=1)
    counts = np.bincount(chosen, minlength=len(tokens)).astype(np.float64)
    share = counts[counts > 0] / counts.sum()
    return int(np.count_nonzero(counts)), float(-(share * np.log(share)).sum())


def token_diversity(params, config, sequence):
    """
    Per tracked frame, how many memory tokens the ground-truth foreground
    features spread over, averaged over the sequence.
    """
    tracker = Tracker(params, config)
    features = sequence_features(params, config, sequence)
    first = sequence.frames[0]
    state = tracker.init_track(first.points, first.gt_box, sequence.name)
    used, entropy = [], []
    for frame, encoded in zip(sequence.frames[1:], features[1:]):
        _, state = tracker.step(state, frame.points)
        count, spread = token_assignment(state.memory.fg_tokens.value, encoded.features[encoded.mask])
        used.append(count)
        entropy.append(spread)
    return {'tokens': config.num_tokens, 'used': float(np.mean(used)) if used else 0.0,
            'entropy': float(np.mean(entropy)) if entropy else 0.0}


# training studies

ABLATION_VARIANTS = (
    ('memory', {'use_tc': False, 'use_mcc': False}),
    ('memory+tc', {'use_tc': True, 'use_mcc': False}),
    ('memory+tc+mcc', {'use_tc': True, 'use_mcc': True}),
)


@dataclass
class StudyRow:
    label: str
    result: OpeResult
    tracklets: List[TrackletResult]
    extras: Dict[str, float] = dataclasses.field(default_factory=dict)

    @property
    def seconds_per_frame(self):
        return float(np.mean([t.seconds_per_frame for t in self.tracklets])) if self.tracklets else 0.0


def train_and_evaluate(label, train_set, eval_set, tracker_config, train_config, steps=None):
    logger.info('training %s', label)
    state = train(train_set, tracker_config, train_config, steps=steps)
    tracklets = evaluate(state.params, tracker_config, eval_set)
    row = StudyRow(label, mean_success(tracklets), tracklets)
    if state.history:
        row.extras['final_loss'] = state.history[-1]['total']
    return row


def ablation(train_set, eval_set, tracker_config, train_config, steps=None):
    """
    Retrain with the consistency losses toggled; every row starts from the same
    seed and sees the same windows.
    """
    rows = []
    for label, overrides in ABLATION_VARIANTS:
        rows.append(train_and_evaluate(label, train_set, eval_set, tracker_config,
                                       dataclasses.replace(train_config, **overrides), steps=steps))
    base = rows[0].result
    for row in rows:
        row.extras['delta_success'] = row.result.success - base.success
        row.extras['delta_precision'] = row.result.precision - base.precision
    return rows


def override(tracker_config, train_config, name, value):
    """
    Return both configs with ``name`` set to ``value`` (text or typed), on
    whichever config owns that field.
    """
    name = SWEEP_ALIASES.get(name, name)
    for config in (tracker_config, train_config):
        owned = {f.name: f for f in dataclasses.fields(config)}
        if name in owned:
            typed = parse_value(owned[name], value) if isinstance(value, str) else value
            changed = dataclasses.replace(config, **{name: typed})
            if isinstance(config, TrackerConfig):
                return changed, train_config
            return tracker_config, changed
    raise ConfigError(name, 'not a tracker or training setting')


def sweep(train_set, eval_set, tracker_config, train_config, name, values, steps=None):
    rows = []
    for value in values:
        tracker_variant, train_variant = override(tracker_config, train_config, name, value)
        rows.append(train_and_evaluate('%s=%s' % (name, value), train_set, eval_set, tracker_variant, train_variant,
                                       steps=steps))
    return rows


def frozen_baseline(params, tracker_config, eval_set):
    """
    The same parameters tracked with and without memory updates.
    """
    rows = []
    for label, update in (('memory', True), ('frozen-template', False)):
        config = dataclasses.replace(tracker_config, update_memory=update)
        tracklets = evaluate(params, config, eval_set)
        rows.append(StudyRow(label, mean_success(tracklets), tracklets))
    rows[1].extras['delta_success'] = rows[1].result.success - rows[0].result.success
    return rows

