"""
Neighbourhood queries and downsampling over small point sets; both are exact.
"""
import numpy as np
from scipy.spatial.distance import cdist

from chronotrack.accel import try_jit


@try_jit
def _farthest_point_indices(points, count):
    n = points.shape[0]
    chosen = np.empty(count, dtype=np.int64)
    start = 0
    best = -1.0
    for i in range(n):
        norm = points[i, 0] * points[i, 0] + points[i, 1] * points[i, 1] + points[i, 2] * points[i, 2]
        if norm > best:
            best = norm
            start = i
    nearest = np.full(n, np.inf)
    current = start
    for k in range(count):
        chosen[k] = current
        farthest = -1.0
        following = 0
        for i in range(n):
            dx = points[i, 0] - points[current, 0]
            dy = points[i, 1] - points[current, 1]
            dz = points[i, 2] - points[current, 2]
            distance = dx * dx + dy * dy + dz * dz
            if distance < nearest[i]:
                nearest[i] = distance
            if nearest[i] > farthest:
                farthest = nearest[i]
                following = i
        current = following
    return chosen


def farthest_point_sample(points, count):
    """
    Indices of ``count`` points chosen by farthest-point sampling, starting from
    the point of largest norm. Ties go to the lowest index.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if count <= 0 or not len(points):
        return np.zeros(0, dtype=np.intp)
    return np.asarray(_farthest_point_indices(points, int(min(count, len(points)))), dtype=np.intp)


def knn_indices(points, k):
    """
    ``(n, k)`` indices of each point's k nearest other points, nearest first.
    """
    points = np.asarray(points, dtype=np.float64)
    distances = cdist(points, points, 'sqeuclidean')
    np.fill_diagonal(distances, np.inf)
    return np.argsort(distances, axis=1, kind='stable')[:, :k]
