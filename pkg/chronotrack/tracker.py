"""
Per-sequence inference: crop the search region around the previous box,
resample it, then encode -> refine -> decode -> update memory.
"""
import logging
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from chronotrack.autodiff.graph import Graph
from chronotrack.config import TrackerConfig
from chronotrack.exceptions import InitializationError
from chronotrack.geometry import Box3D, box_to_local, canonicalize, points_in_box
from chronotrack.memory import MemoryState, init_memory, refine, update_memory
from chronotrack.perception.decoder import Prediction, decode
from chronotrack.perception.encoder import encode
from chronotrack.utils import derive_seed


logger = logging.getLogger(__name__)


@dataclass
class SearchRegion:
    points: np.ndarray
    degenerate: bool


@dataclass
class TrackerState:
    memory: MemoryState
    previous_box: Box3D
    previous_max_targetness: float
    frame: int
    sequence_id: str = ''
    prediction: Optional[Prediction] = None


def crop_and_resample(raw_points, previous_box, config, seed):
    """
    Points inside the previous box enlarged by the search margins, resampled to
    exactly ``config.num_points`` rows. Without replacement when there are
    enough, with replacement otherwise; an empty region becomes copies of the
    previous center and is flagged degenerate.
    """
    raw_points = np.asarray(raw_points, dtype=np.float64).reshape(-1, 3)
    margin = (config.search_margin_xy, config.search_margin_xy, config.search_margin_z)
    inside = raw_points[points_in_box(raw_points, previous_box, margin=margin)] if len(raw_points) else raw_points
    if not len(inside):
        return SearchRegion(np.tile(previous_box.center_array(), (config.num_points, 1)), True)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(inside), size=config.num_points, replace=len(inside) < config.num_points)
    return SearchRegion(inside[chosen], False)


def seed_mask(seeds, gt_box, reference):
    """
    Ground-truth foreground flags for seeds expressed in ``reference``'s frame.
    """
    return points_in_box(seeds, box_to_local(gt_box, reference))


class Tracker:
    """
    Stateless driver; per-sequence state lives in ``TrackerState`` so one
    ``Tracker`` (and one read-only parameter dict) can serve many sequences.
    """
    config_class = TrackerConfig

    def __init__(self, params, config=None, **kwargs):
        self.params = params
        self.config = config or self.config_class()
        self.frames_tracked = 0
        self.seconds = 0.0
        for key, value in kwargs.items():
            setattr(self, key, value)

    @property
    def seconds_per_frame(self):
        return self.seconds / self.frames_tracked if self.frames_tracked else 0.0

    def graph(self):
        return Graph(self.params, record=False)

    def region(self, raw_points, previous_box, sequence_id, frame):
        return crop_and_resample(raw_points, previous_box, self.config, derive_seed(sequence_id, frame))

    def init_track(self, raw_points, gt_box, sequence_id=''):
        raw_points = np.asarray(raw_points, dtype=np.float64).reshape(-1, 3)
        if not points_in_box(raw_points, gt_box).any():
            name = sequence_id or 'sequence'
            raise InitializationError('%s: the first ground-truth box contains no points' % name)
        region = self.region(raw_points, gt_box, sequence_id, 1)
        graph = self.graph()
        feature_map = encode(graph, canonicalize(region.points, gt_box), self.config)
        mask = seed_mask(feature_map.seeds, gt_box, gt_box)
        if not mask.any():
            name = sequence_id or 'sequence'
            raise InitializationError('%s: no seed of the first frame falls inside the ground-truth box' % name)
        memory = init_memory(graph, feature_map, mask, self.config)
        return TrackerState(memory, gt_box, 1.0, 1, sequence_id)

    def should_reuse_previous(self, prediction, region):
        return region.degenerate or prediction.max_targetness < self.config.confidence_floor

    def step(self, state, raw_points):
        started = time.perf_counter()
        frame = state.frame + 1
        previous = state.previous_box
        region = self.region(raw_points, previous, state.sequence_id, frame)
        if region.degenerate:
            logger.debug('%s frame %d: empty search region', state.sequence_id, frame)
        graph = self.graph()
        feature_map = encode(graph, canonicalize(region.points, previous), self.config)
        refined = refine(graph, feature_map, state.memory, self.config)
        prediction = decode(graph, feature_map.with_features(refined), previous, self.config)
        box = previous if self.should_reuse_previous(prediction, region) else prediction.box
        memory = state.memory
        if self.config.update_memory and not region.degenerate:
            memory = update_memory(graph, memory, feature_map, prediction.targetness, self.config.tau_mask,
                                   self.config)
        self.frames_tracked += 1
        self.seconds += time.perf_counter() - started
        new_state = replace(state, memory=memory, previous_box=box, previous_max_targetness=prediction.max_targetness,
                            frame=frame, prediction=prediction)
        return box, new_state

    def track_sequence(self, sequence):
        if len(sequence.frames) < 2:
            return []
        first = sequence.frames[0]
        state = self.init_track(first.points, first.gt_box, sequence.name)
        boxes = []
        for frame in sequence.frames[1:]:
            box, state = self.step(state, frame.points)
            boxes.append(box)
        return boxes


def init_track(raw_points, gt_box, params, config, sequence_id=''):
    return Tracker(params, config).init_track(raw_points, gt_box, sequence_id)


def step(state, raw_points, params, config):
    return Tracker(params, config).step(state, raw_points)


def track_sequence(sequence, params, config):
    return Tracker(params, config).track_sequence(sequence)
