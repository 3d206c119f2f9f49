"""
One-pass evaluation.

Success is the area under the IoU success curve over thresholds in [0, 1] and
Precision the normalised area under the center-error curve over [0, 2 m].
Both areas have closed forms: the mean IoU, and the mean of
``(2 - min(error, 2)) / 2``. ``trapezoid_auc`` evaluates the sampled curves
and is kept as a reference.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.integrate import trapezoid

from chronotrack.exceptions import EvaluationError
from chronotrack.geometry import center_distance, iou3d


logger = logging.getLogger(__name__)

PRECISION_RANGE = 2.0
GROUPS = ('S', 'M', 'L', 'XL')


def _mean(values):
    # exactly rounded, so the value does not depend on the order of ``values``
    values = list(values)
    return math.fsum(values) / len(values)


@dataclass
class OpeResult:
    success: float
    precision: float
    ious: List[float] = field(default_factory=list)
    errors: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.ious)

    @classmethod
    def from_frames(cls, ious, errors):
        ious = np.asarray(ious, dtype=np.float64)
        errors = np.asarray(errors, dtype=np.float64)
        if not ious.size:
            return cls(0.0, 0.0, [], [])
        success = 100.0 * _mean(ious)
        precision = 100.0 * _mean((PRECISION_RANGE - np.minimum(errors, PRECISION_RANGE)) / PRECISION_RANGE)
        return cls(success, precision, ious.tolist(), errors.tolist())

    @classmethod
    def merge(cls, results):
        """
        Frame-weighted pooling of several results.
        """
        return cls.from_frames([v for r in results for v in r.ious], [v for r in results for v in r.errors])


@dataclass
class TrackletResult:
    name: str
    category: str
    length: int
    result: OpeResult
    seconds_per_frame: float = 0.0


def ope(pred_boxes, gt_boxes, name='sequence'):
    if len(pred_boxes) != len(gt_boxes):
        raise EvaluationError(name, '%d predicted boxes for %d ground-truth frames' % (len(pred_boxes), len(gt_boxes)))
    if not pred_boxes:
        raise EvaluationError(name, 'nothing to evaluate')
    ious = [iou3d(pred, gt) for pred, gt in zip(pred_boxes, gt_boxes)]
    errors = [center_distance(pred, gt) for pred, gt in zip(pred_boxes, gt_boxes)]
    return OpeResult.from_frames(ious, errors)


def trapezoid_auc(ious, errors, points=2001):
    """
    ``(success, precision)`` from sampled threshold curves and the trapezoid rule.
    """
    ious = np.asarray(ious, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    overlap = np.linspace(0.0, 1.0, points)
    distance = np.linspace(0.0, PRECISION_RANGE, points)
    success_curve = (ious[None, :] > overlap[:, None]).mean(axis=1)
    precision_curve = (errors[None, :] <= distance[:, None]).mean(axis=1)
    return (100.0 * float(trapezoid(success_curve, overlap)),
            100.0 * float(trapezoid(precision_curve, distance)) / PRECISION_RANGE)


@dataclass
class Stratification:
    thresholds: tuple
    groups: Dict[str, List[TrackletResult]]

    def summary(self):
        """
        ``{group: (count, mean success, mean precision)}`` with empty groups at zero.
        """
        table = {}
        for name, members in self.groups.items():
            if members:
                table[name] = (len(members), _mean([m.result.success for m in members]),
                               _mean([m.result.precision for m in members]))
            else:
                table[name] = (0, 0.0, 0.0)
        return table


def length_thresholds(lengths):
    return tuple(float(v) for v in np.percentile(np.asarray(lengths, dtype=np.float64), [25, 50, 75]))


def stratify_by_length(tracklets):
    """
    Split tracklets at the 25th/50th/75th length percentiles (linear
    interpolation) into S, M, L and XL; ``length <= threshold`` falls in the
    lower group.
    """
    tracklets = sorted(tracklets, key=lambda t: (t.length, t.name))
    if len(tracklets) < 4:
        logger.warning('%d tracklets are too few for quartiles, reporting a single group', len(tracklets))
        return Stratification((), {'ALL': list(tracklets)})
    thresholds = length_thresholds([t.length for t in tracklets])
    if thresholds[0] == thresholds[-1]:
        logger.warning('length quartiles coincide at %s, groups above S stay empty', thresholds[0])
    groups = {name: [] for name in GROUPS}
    for tracklet in tracklets:
        index = int(np.searchsorted(thresholds, tracklet.length, side='left'))
        groups[GROUPS[index]].append(tracklet)
    return Stratification(thresholds, groups)


def by_category(tracklets):
    """
    Frame-weighted ``OpeResult`` per category plus a ``mean`` entry over all.
    """
    tracklets = sorted(tracklets, key=lambda t: (t.category, t.name))
    categories = sorted({t.category for t in tracklets})
    table = {category: OpeResult.merge([t.result for t in tracklets if t.category == category])
             for category in categories}
    table['mean'] = OpeResult.merge([t.result for t in tracklets])
    return table
