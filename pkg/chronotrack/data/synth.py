"""
Deterministic synthetic LiDAR-style sequences.

A target archetype is point-sampled once in its canonical pose and moved
rigidly along a waypoint path, so the ground-truth box follows it exactly.
Per frame a density multiplier thins the template, an angular sector is
occluded, distractor instances travel on offset paths and uniform clutter
fills the scene before Gaussian jitter is applied to every point.
"""
import logging
import math
from dataclasses import dataclass, fields, replace
from typing import Tuple

import numpy as np

from chronotrack.data.sequence import Frame, Sequence
from chronotrack.exceptions import GeneratorSpecError
from chronotrack.geometry import Box3D, move_points
from chronotrack.utils import derive_seed


logger = logging.getLogger(__name__)

SCENE_MARGIN = 8.0
SCENE_HEIGHT = 2.5
# keeps surface points strictly inside the box after rigid motion round-off
BOUNDARY_INSET = 1e-6


def _ring(rng, count, radius, center, axis):
    angle = rng.uniform(0.0, 2.0 * math.pi, count)
    points = np.tile(np.asarray(center, dtype=np.float64), (count, 1))
    first, second = axis
    points[:, first] += radius * np.cos(angle)
    points[:, second] += radius * np.sin(angle)
    return points


def _cylinder(rng, count, radius, center_xy, bottom, top):
    points = _ring(rng, count, radius, (center_xy[0], center_xy[1], 0.0), (0, 1))
    points[:, 2] = rng.uniform(bottom, top, count)
    return points


def _shell(rng, count, half, bottom, top, skip_bottom=True):
    """
    Surface of an axis-aligned box ``[-hx, hx] x [-hy, hy] x [bottom, top]``.
    """
    hx, hy = half
    height = top - bottom
    faces = [hy * height, hy * height, hx * height, hx * height, hx * hy] + ([] if skip_bottom else [hx * hy])
    faces = np.array(faces)
    face = rng.choice(len(faces), size=count, p=faces / faces.sum())
    points = np.column_stack([rng.uniform(-hx, hx, count), rng.uniform(-hy, hy, count),
                              rng.uniform(bottom, top, count)])
    points[face == 0, 0] = hx
    points[face == 1, 0] = -hx
    points[face == 2, 1] = hy
    points[face == 3, 1] = -hy
    points[face == 4, 2] = top
    points[face == 5, 2] = bottom
    return points


def _split(count, weights):
    weights = np.asarray(weights, dtype=np.float64)
    counts = np.floor(count * weights / weights.sum()).astype(int)
    counts[0] += count - counts.sum()
    return counts


def car_shell(rng, count, size):
    w, l, h = size
    bottom = -h / 2.0
    body, cabin = _split(count, (0.7, 0.3))
    return np.concatenate([
        _shell(rng, body, (l / 2.0, w / 2.0), bottom + 0.15 * h, bottom + 0.6 * h),
        _shell(rng, cabin, (l / 4.0, 0.45 * w), bottom + 0.6 * h, h / 2.0) + np.array([-0.05 * l, 0.0, 0.0]),
    ])


def pedestrian_cylinders(rng, count, size):
    w, l, h = size
    bottom = -h / 2.0
    legs, torso, head = _split(count, (0.35, 0.5, 0.15))
    radius = min(w, l) / 2.0
    left, right = _split(legs, (1, 1))
    return np.concatenate([
        _cylinder(rng, left, 0.25 * radius, (0.0, 0.35 * w), bottom, bottom + 0.5 * h),
        _cylinder(rng, right, 0.25 * radius, (0.0, -0.35 * w), bottom, bottom + 0.5 * h),
        _cylinder(rng, torso, 0.6 * radius, (0.0, 0.0), bottom + 0.5 * h, bottom + 0.85 * h),
        _cylinder(rng, head, 0.3 * radius, (0.0, 0.0), bottom + 0.85 * h, h / 2.0),
    ])


def cyclist_composite(rng, count, size):
    w, l, h = size
    bottom = -h / 2.0
    wheels, frame, rider = _split(count, (0.4, 0.15, 0.45))
    radius = min(0.2 * l, 0.2 * h)
    front, rear = _split(wheels, (1, 1))
    along = rng.uniform(-0.25 * l, 0.25 * l, frame)
    bar = np.column_stack([along, np.zeros(frame), np.full(frame, bottom + 2.0 * radius)])
    return np.concatenate([
        _ring(rng, front, radius, (0.5 * l - radius, 0.0, bottom + radius), (0, 2)),
        _ring(rng, rear, radius, (-0.5 * l + radius, 0.0, bottom + radius), (0, 2)),
        bar,
        _cylinder(rng, rider, 0.3 * w, (0.0, 0.0), bottom + 2.0 * radius, h / 2.0),
    ])


ARCHETYPES = {
    'car-shell': ('car', (1.8, 4.2, 1.5), car_shell),
    'pedestrian-cylinders': ('pedestrian', (0.7, 0.8, 1.75), pedestrian_cylinders),
    'cyclist-composite': ('cyclist', (0.7, 1.8, 1.7), cyclist_composite),
}


@dataclass(frozen=True)
class GeneratorSpec:
    """
    ``waypoints`` are ``(x, y, heading)`` key poses spread evenly over the
    frames. ``density`` and ``occlusion`` are schedules interpolated the same
    way: density multiplies ``target_points``, occlusion is the hidden
    fraction of the target surface.
    """
    archetype: str = 'car-shell'
    frames: int = 40
    waypoints: Tuple[Tuple[float, float, float], ...] = ((0.0, 0.0, 0.0), (20.0, 0.0, 0.0))
    target_points: int = 400
    density: Tuple[float, ...] = (1.0,)
    occlusion: Tuple[float, ...] = (0.0,)
    distractors: int = 0
    clutter_density: float = 0.0
    noise: float = 0.0
    seed: int = 0
    name: str = ''

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise GeneratorSpecError('unknown archetype %r' % self.archetype)
        if self.frames < 2:
            raise GeneratorSpecError('a sequence needs at least 2 frames')
        if not self.waypoints or any(len(pose) != 3 for pose in self.waypoints):
            raise GeneratorSpecError('waypoints must be (x, y, heading) triples')
        if self.target_points < 1 or not self.density or min(self.density) < 0:
            raise GeneratorSpecError('densities must not be negative')
        if not self.occlusion or not all(0.0 <= value < 1.0 for value in self.occlusion):
            raise GeneratorSpecError('occlusion fractions must lie in [0, 1)')
        if self.distractors < 0 or self.clutter_density < 0 or self.noise < 0:
            raise GeneratorSpecError('distractors, clutter and noise must not be negative')

    @property
    def category(self):
        return ARCHETYPES[self.archetype][0]

    @property
    def size(self):
        return ARCHETYPES[self.archetype][1]


def schedule(values, frames):
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 1:
        return np.full(frames, values[0])
    return np.interp(np.linspace(0.0, len(values) - 1.0, frames), np.arange(len(values)), values)


def trajectory(spec):
    """
    Per-frame ``(x, y, heading)`` of the box center; headings are unwrapped
    before interpolation so a turn through pi stays smooth.
    """
    poses = np.asarray(spec.waypoints, dtype=np.float64)
    headings = np.unwrap(poses[:, 2])
    return np.column_stack([schedule(poses[:, 0], spec.frames), schedule(poses[:, 1], spec.frames),
                            schedule(headings, spec.frames)])


def template(archetype, count, rng):
    _, size, sampler = ARCHETYPES[archetype]
    half = np.array([size[1], size[0], size[2]]) / 2.0 - BOUNDARY_INSET
    return np.clip(sampler(rng, count, size), -half, half)


def occlude(points, fraction, start):
    """
    Drop the first ``round(fraction * n)`` points in angular order around the
    up axis, starting at ``start``.
    """
    hidden = int(round(fraction * len(points)))
    if not hidden:
        return points
    angle = np.mod(np.arctan2(points[:, 1], points[:, 0]) - start, 2.0 * math.pi)
    order = np.argsort(angle, kind='stable')
    return points[np.sort(order[hidden:])]


def _pose_points(canonical, x, y, heading, center_z):
    return move_points(canonical, heading, (x, y, center_z))


def generate_sequence(spec):
    rng = np.random.default_rng(derive_seed('synth', spec.seed, spec.archetype, spec.name))
    category, size, _ = ARCHETYPES[spec.archetype]
    densities = schedule(spec.density, spec.frames)
    occlusions = schedule(spec.occlusion, spec.frames)
    capacity = int(math.ceil(spec.target_points * max(1.0, float(densities.max()))))
    target = template(spec.archetype, capacity, rng)
    sector_start = rng.uniform(0.0, 2.0 * math.pi)
    path = trajectory(spec)
    center_z = size[2] / 2.0

    distractors = []
    for _ in range(spec.distractors):
        archetype = sorted(ARCHETYPES)[rng.integers(len(ARCHETYPES))]
        bearing = rng.uniform(0.0, 2.0 * math.pi)
        offset = rng.uniform(4.0, 8.0) * np.array([math.cos(bearing), math.sin(bearing)])
        count = max(1, int(spec.target_points * rng.uniform(0.5, 1.0)))
        distractors.append((template(archetype, count, rng), offset, rng.uniform(-math.pi, math.pi),
                            ARCHETYPES[archetype][1][2] / 2.0))

    low = path[:, :2].min(axis=0) - SCENE_MARGIN
    high = path[:, :2].max(axis=0) + SCENE_MARGIN
    clutter_count = int(round(spec.clutter_density * float(np.prod(high - low)) * SCENE_HEIGHT))

    frames = []
    for t in range(spec.frames):
        x, y, heading = path[t]
        box = Box3D((x, y, center_z), heading, size)
        visible = occlude(target[:int(round(spec.target_points * densities[t]))], occlusions[t], sector_start)
        parts = [_pose_points(visible, x, y, heading, center_z)]
        for points, offset, yaw, z in distractors:
            parts.append(_pose_points(points, x + offset[0], y + offset[1], heading + yaw, z))
        if clutter_count:
            parts.append(np.column_stack([rng.uniform(low[0], high[0], clutter_count),
                                          rng.uniform(low[1], high[1], clutter_count),
                                          rng.uniform(0.0, SCENE_HEIGHT, clutter_count)]))
        points = np.concatenate(parts)
        if spec.noise:
            points = points + rng.normal(0.0, spec.noise, points.shape)
        frames.append(Frame(points, box))
    if not frames[0].gt_mask.any():
        raise GeneratorSpecError('%s: the first frame has no target point' % (spec.name or spec.archetype))
    return Sequence(spec.name or '%s-%d' % (spec.archetype, spec.seed), category, frames)


@dataclass(frozen=True)
class SuiteSpec:
    """
    A family of random-walk sequences; every range is ``min,max`` and each
    sequence draws its own values from a seed derived from ``seed`` and its
    index.
    """
    sequences: int = 10
    archetypes: Tuple[str, ...] = tuple(sorted(ARCHETYPES))
    frames: Tuple[int, ...] = (40, 40)
    target_points: int = 400
    speed: Tuple[float, ...] = (0.5, 1.5)
    turn: float = 0.03
    occlusion: Tuple[float, ...] = (0.0, 0.0)
    min_density: float = 1.0
    distractors: int = 0
    clutter_density: float = 0.0
    noise: float = 0.0
    seed: int = 0
    prefix: str = 'seq'

    def specs(self):
        for index in range(self.sequences):
            yield self.spec(index)

    def spec(self, index):
        rng = np.random.default_rng(derive_seed('suite', self.seed, index))
        archetype = self.archetypes[index % len(self.archetypes)]
        frames = int(rng.integers(self.frames[0], self.frames[-1] + 1))
        heading = rng.uniform(-math.pi, math.pi)
        x = y = 0.0
        waypoints = []
        for _ in range(frames):
            waypoints.append((x, y, heading))
            speed = rng.uniform(self.speed[0], self.speed[-1])
            heading += rng.uniform(-self.turn, self.turn)
            x += speed * math.cos(heading)
            y += speed * math.sin(heading)
        peak = rng.uniform(self.occlusion[0], self.occlusion[-1])
        return GeneratorSpec(archetype=archetype, frames=frames, waypoints=tuple(waypoints),
                             target_points=self.target_points,
                             density=(1.0, rng.uniform(self.min_density, 1.0), 1.0),
                             occlusion=(0.0, peak, 0.5 * peak), distractors=self.distractors,
                             clutter_density=self.clutter_density, noise=self.noise,
                             seed=derive_seed(self.seed, index), name='%s-%04d' % (self.prefix, index))


def parse_suite(text):
    """
    ``key = value`` lines with ``SuiteSpec`` field names; lists and ranges are
    comma separated.
    """
    known = {f.name for f in fields(SuiteSpec)}
    values = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise GeneratorSpecError('line %d: expected key = value' % number)
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in known:
            raise GeneratorSpecError('line %d: unknown key %r' % (number, key))
        default = getattr(SuiteSpec, key, None) if key != 'archetypes' else ()
        try:
            if key == 'archetypes':
                values[key] = tuple(part.strip() for part in value.split(',') if part.strip())
            elif key == 'prefix':
                values[key] = value
            elif isinstance(default, tuple):
                kind = int if key == 'frames' else float
                values[key] = tuple(kind(part) for part in value.split(',') if part.strip())
            else:
                values[key] = type(default)(value)
        except ValueError:
            raise GeneratorSpecError('line %d: cannot parse %r for %s' % (number, value, key))
    suite = replace(SuiteSpec(), **values)
    unknown = [name for name in suite.archetypes if name not in ARCHETYPES]
    if unknown or not suite.archetypes:
        raise GeneratorSpecError('unknown archetypes %s' % ', '.join(unknown or ['(none)']))
    if suite.frames[0] < 2 or suite.frames[-1] < suite.frames[0]:
        raise GeneratorSpecError('frames must be a range of at least 2')
    return suite


def load_suite(path):
    with open(path) as handle:
        return parse_suite(handle.read())


def generate_suite(suite):
    sequences = [generate_sequence(spec) for spec in suite.specs()]
    logger.info('generated %d sequences (%d frames)', len(sequences), sum(len(s) for s in sequences))
    return sequences
