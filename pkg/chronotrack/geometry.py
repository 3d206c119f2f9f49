"""
Oriented 3D box algebra.

Points are rows. A box's canonical frame has its origin at the box center and
its x axis along the heading, so ``C = (P - center) @ heading_rotation(theta)``.
Sizes are ``(w, l, h)``: ``l`` runs along the heading, ``w`` across it.
"""
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import shapely.affinity
import shapely.geometry
from scipy.spatial.distance import cdist

from chronotrack.exceptions import GeometryError


EMPTY_AREA = 1e-12


def normalize_angle(theta):
    """
    Map ``theta`` into (-pi, pi].
    """
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class Box3D:
    center: Tuple[float, float, float]
    heading: float
    size: Tuple[float, float, float]

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        if len(center) != 3 or len(size) != 3:
            raise GeometryError('box needs a 3-vector center and a (w, l, h) size')
        if not all(math.isfinite(v) for v in center + (float(self.heading),)):
            raise GeometryError('box center and heading must be finite')
        if min(size) <= 0:
            raise GeometryError('box sizes must be positive, got %s' % (size,))
        object.__setattr__(self, 'center', center)
        object.__setattr__(self, 'size', size)
        object.__setattr__(self, 'heading', normalize_angle(float(self.heading)))

    @property
    def width(self):
        return self.size[0]

    @property
    def length(self):
        return self.size[1]

    @property
    def height(self):
        return self.size[2]

    @property
    def volume(self):
        return self.size[0] * self.size[1] * self.size[2]

    def center_array(self):
        return np.array(self.center, dtype=np.float64)


@dataclass
class CorrespondenceSet:
    """
    Matches ``(t, i) -> (t', j)`` with ``t < t'``; ``i`` and ``j`` index the
    foreground points of their frames, in frame order.
    """
    source_frame: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    source_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    target_frame: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    target_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    distance: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return int(self.distance.size)

    def triples(self):
        return list(zip(self.source_frame.tolist(), self.source_index.tolist(), self.target_frame.tolist(),
                        self.target_index.tolist()))

    def frame_pairs(self):
        """
        Yield ``(t, t', i_array, j_array)`` grouped by frame pair.
        """
        keys = sorted(set(zip(self.source_frame.tolist(), self.target_frame.tolist())))
        for source, target in keys:
            chosen = (self.source_frame == source) & (self.target_frame == target)
            yield source, target, self.source_index[chosen], self.target_index[chosen]


def heading_rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def canonicalize(points, box):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return (points - box.center_array()) @ heading_rotation(box.heading)


def decanonicalize(points, box):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points @ heading_rotation(box.heading).T + box.center_array()


def box_to_local(box, reference):
    """
    ``box`` expressed in the canonical frame of ``reference``.
    """
    return Box3D(canonicalize(box.center_array(), reference)[0], box.heading - reference.heading, box.size)


def box_from_local(box, reference):
    return Box3D(decanonicalize(box.center_array(), reference)[0], box.heading + reference.heading, box.size)


def move_points(points, yaw, translation):
    """
    Rigid motion: rotate by ``yaw`` about the up axis, then translate.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return points @ heading_rotation(yaw).T + np.asarray(translation, dtype=np.float64)


def move_box(box, yaw, translation):
    return Box3D(move_points(box.center_array(), yaw, translation)[0], box.heading + yaw, box.size)


def points_in_box(points, box, margin=(0.0, 0.0, 0.0)):
    """
    Boolean mask of points inside ``box`` (boundary inclusive), optionally
    enlarged by ``margin`` = (along length, along width, vertical) on every side.
    """
    local = canonicalize(points, box)
    half = np.array([box.length / 2.0 + margin[0], box.width / 2.0 + margin[1], box.height / 2.0 + margin[2]])
    return np.all(np.abs(local) <= half, axis=1)


def bev_polygon(box):
    rectangle = shapely.geometry.box(-box.length / 2.0, -box.width / 2.0, box.length / 2.0, box.width / 2.0)
    rotated = shapely.affinity.rotate(rectangle, box.heading, origin=(0.0, 0.0), use_radians=True)
    return shapely.affinity.translate(rotated, box.center[0], box.center[1])


def iou3d(a, b):
    bottom = max(a.center[2] - a.height / 2.0, b.center[2] - b.height / 2.0)
    top = min(a.center[2] + a.height / 2.0, b.center[2] + b.height / 2.0)
    overlap_z = top - bottom
    if overlap_z <= 0:
        return 0.0
    area = bev_polygon(a).intersection(bev_polygon(b)).area
    if area < EMPTY_AREA:
        return 0.0
    intersection = area * overlap_z
    union = a.volume + b.volume - intersection
    return float(min(max(intersection / union, 0.0), 1.0))


def center_distance(a, b):
    return float(np.linalg.norm(a.center_array() - b.center_array()))


def build_correspondences(points, boxes, masks, tau_dist):
    """
    Nearest canonical foreground neighbour in every later frame, kept when the
    distance is strictly below ``tau_dist``.

    ``points``, ``boxes`` and ``masks`` are per-frame sequences of equal length.
    """
    canonical = [canonicalize(np.asarray(p)[np.asarray(m, dtype=bool)], box)
                 for p, box, m in zip(points, boxes, masks)]
    parts = {'source_frame': [], 'source_index': [], 'target_frame': [], 'target_index': [], 'distance': []}
    for t, source in enumerate(canonical):
        if not len(source):
            continue
        for later in range(t + 1, len(canonical)):
            target = canonical[later]
            if not len(target):
                continue
            distances = cdist(source, target)
            nearest = np.argmin(distances, axis=1)
            best = distances[np.arange(len(source)), nearest]
            kept = np.flatnonzero(best < tau_dist)
            parts['source_frame'].append(np.full(kept.size, t, dtype=np.intp))
            parts['source_index'].append(kept.astype(np.intp))
            parts['target_frame'].append(np.full(kept.size, later, dtype=np.intp))
            parts['target_index'].append(nearest[kept].astype(np.intp))
            parts['distance'].append(best[kept])
    if not parts['distance']:
        return CorrespondenceSet()
    return CorrespondenceSet(**{name: np.concatenate(chunks) for name, chunks in parts.items()})
