"""
Built-in oracle suites behind ``chronotrack selftest``. Each check compares a
production code path against an independent computation and reports the
worst deviation it saw.
"""
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from chronotrack.autodiff import ops
from chronotrack.autodiff.gradcheck import grad_check
from chronotrack.config import TrackerConfig, TrainConfig
from chronotrack.data.synth import GeneratorSpec, generate_sequence
from chronotrack.evaluation.analysis import memory_footprint, rollout_element_counts
from chronotrack.evaluation.metrics import OpeResult, trapezoid_auc
from chronotrack.geometry import Box3D, build_correspondences, canonicalize, iou3d, move_box, move_points
from chronotrack.model import build_parameters
from chronotrack.objectives import build_transitions, foreground_loss
from chronotrack.training.window import prepare_window, sample_window, window_forward


logger = logging.getLogger(__name__)

MICRO_TRACKER = TrackerConfig(num_points=16, num_tokens=2, dim=4, mu_layers=1, mfr_layers=1, heads=1, knn_k=4,
                              encoder_widths=(4, 4, 4))
MICRO_TRAIN = TrainConfig(window=3, batch_size=1)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    limit: float
    seconds: float = 0.0


def micro_window(seed=0):
    spec = GeneratorSpec(archetype='car-shell', frames=3, waypoints=((0.0, 0.0, 0.0), (1.0, 0.2, 0.1)),
                         target_points=60, seed=seed)
    sample = sample_window([generate_sequence(spec)], MICRO_TRAIN.window, seed)
    return prepare_window(sample, MICRO_TRACKER, MICRO_TRAIN, seed)


def check_gradients(quick):
    params = build_parameters(MICRO_TRACKER, seed=1)
    window = micro_window()

    def closure(graph, tensors):
        return window_forward(graph, window, MICRO_TRACKER, MICRO_TRAIN).total

    worst = grad_check(closure, params, floor=1e-6, entries=3 if quick else None)
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
    worst = max(worst, grad_check(
        lambda graph, t: ops.sum_reduce(ops.softmax(ops.cosine_similarity(t['a'], t['b']), temperature=0.1)
                                        * np.arange(15.0).reshape(3, 5)), {'a': a, 'b': b}))
    return worst, 1e-3


def check_cyclic_walk(quick):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50 if quick else 1000):
        k, n, d = rng.integers(1, 6), rng.integers(2, 12), rng.integers(2, 8)
        matrices = build_transitions(ops.constant(rng.normal(size=(k, d))), ops.constant(rng.normal(size=(n, d))),
                                     float(rng.uniform(0.05, 1.0)))
        for matrix in (matrices.token_to_point, matrices.point_to_token, matrices.cycle):
            worst = max(worst, float(np.abs(matrix.value.sum(axis=1) - 1.0).max()))
    features = np.ones((8, 4))
    uniform = build_transitions(ops.constant(rng.normal(size=(3, 4))), ops.constant(features), 0.1)
    half = foreground_loss([uniform], [np.arange(4)]).item()
    worst = max(worst, abs(half - math.log(2.0)))
    return worst, 1e-6


def _half_extent(box):
    c, s = abs(math.cos(box.heading)), abs(math.sin(box.heading))
    return np.array([c * box.length + s * box.width, s * box.length + c * box.width, box.height]) / 2.0


def monte_carlo_iou(a, b, samples, rng):
    low = np.minimum(a.center_array() - _half_extent(a), b.center_array() - _half_extent(b))
    high = np.maximum(a.center_array() + _half_extent(a), b.center_array() + _half_extent(b))
    points = rng.uniform(low, high, size=(samples, 3))

    def inside(box):
        local = np.abs(canonicalize(points, box))
        return np.all(local <= np.array([box.length, box.width, box.height]) / 2.0, axis=1)

    in_a, in_b = inside(a), inside(b)
    union = np.count_nonzero(in_a | in_b)
    return np.count_nonzero(in_a & in_b) / union if union else 0.0


def check_iou(quick):
    rng = np.random.default_rng(5)
    samples = 200000 if quick else 1000000
    pairs = [(Box3D((0, 0, 0), 0.0, (2, 2, 2)), Box3D((0, 0, 0), math.pi / 4, (2, 2, 2)))]
    for _ in range(5 if quick else 50):
        a = Box3D(rng.uniform(-1, 1, 3), rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 3.0, 3))
        b = Box3D(a.center_array() + rng.uniform(-1, 1, 3), rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 3.0, 3))
        pairs.append((a, b))
    worst = max(abs(iou3d(a, b) - monte_carlo_iou(a, b, samples, rng)) for a, b in pairs)
    return worst, 0.02 if quick else 0.01


def brute_force_matches(points, boxes, masks, tau):
    found = set()
    canonical = [canonicalize(p[m], b) for p, b, m in zip(points, boxes, masks)]
    for t, source in enumerate(canonical):
        for later in range(t + 1, len(canonical)):
            for i, point in enumerate(source):
                if not len(canonical[later]):
                    continue
                distances = [float(np.linalg.norm(point - other)) for other in canonical[later]]
                j = int(np.argmin(distances))
                if distances[j] < tau:
                    found.add((t, i, later, j))
    return found


def check_correspondences(quick):
    rng = np.random.default_rng(9)
    failures = 0
    worst_motion = 0.0
    for _ in range(10 if quick else 100):
        boxes = [Box3D(rng.uniform(-5, 5, 3), rng.uniform(-math.pi, math.pi), (2.0, 4.0, 1.5)) for _ in range(3)]
        points = [rng.uniform(-3, 3, (20, 3)) + box.center_array() for box in boxes]
        masks = [rng.random(20) < 0.6 for _ in boxes]
        matches = build_correspondences(points, boxes, masks, 0.8)
        failures += set(matches.triples()) != brute_force_matches(points, boxes, masks, 0.8)
        yaw, shift = rng.uniform(-math.pi, math.pi), rng.uniform(-10, 10, 3)
        moved = build_correspondences([move_points(p, yaw, shift) for p in points],
                                      [move_box(b, yaw, shift) for b in boxes], masks, 0.8)
        if moved.triples() != matches.triples():
            failures += 1
        elif len(matches):
            worst_motion = max(worst_motion, float(np.abs(moved.distance - matches.distance).max()))
    return max(float(failures), worst_motion), 1e-9


def check_metrics(quick):
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(20 if quick else 100):
        count = int(rng.integers(1, 60))
        ious, errors = rng.uniform(0, 1, count), rng.uniform(0, 3, count)
        result = OpeResult.from_frames(ious, errors)
        success, precision = trapezoid_auc(ious, errors)
        worst = max(worst, abs(result.success - success), abs(result.precision - precision))
    anchors = OpeResult.from_frames([0.5] * 4, [0.0] * 4)
    if anchors.success != 50.0 or anchors.precision != 100.0:
        worst = float('inf')
    return worst, 0.1


def check_footprint(quick):
    rows = memory_footprint(TrackerConfig(), [1, 2, 3, 4, 8])
    worst = max(abs(row['token'] - 4096) for row in rows)
    worst = max(worst, abs(rows[2]['baseline'] - 49152), abs(rows[4]['ratio'] - 32.0))
    spec = GeneratorSpec(archetype='pedestrian-cylinders', frames=20 if quick else 200, target_points=40,
                         waypoints=((0.0, 0.0, 0.0), (10.0, 5.0, 1.0)), seed=2)
    counts = rollout_element_counts(build_parameters(MICRO_TRACKER), MICRO_TRACKER, generate_sequence(spec))
    expected = MICRO_TRACKER.num_tokens * MICRO_TRACKER.dim
    worst = max(worst, max(abs(count - expected) for count in counts))
    return float(worst), 0.0


CHECKS = (
    ('gradients', check_gradients),
    ('cyclic-walk', check_cyclic_walk),
    ('iou3d', check_iou),
    ('correspondences', check_correspondences),
    ('metrics', check_metrics),
    ('footprint', check_footprint),
)


def run_checks(quick=False):
    results = []
    for name, check in CHECKS:
        started = time.perf_counter()
        worst, limit = check(quick)
        passed = worst <= limit if limit else worst == 0.0
        results.append(CheckResult(name, passed, worst, limit, time.perf_counter() - started))
        log = logger.info if passed else logger.error
        log('%-16s %s worst=%.3g limit=%.3g (%.1fs)', name, 'ok' if passed else 'FAILED', worst, limit,
            results[-1].seconds)
    return results


def run_selftest(quick=False):
    return all(result.passed for result in run_checks(quick=quick))
