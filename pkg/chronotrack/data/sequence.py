"""
In-memory sequences: per-frame points, ground-truth box and foreground mask.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from chronotrack.geometry import Box3D, points_in_box


CATEGORIES = ('car', 'pedestrian', 'cyclist')


@dataclass
class Frame:
    points: np.ndarray
    gt_box: Box3D
    gt_mask: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.gt_mask is None:
            self.gt_mask = self.expected_mask()
        self.gt_mask = np.asarray(self.gt_mask, dtype=bool).reshape(-1)

    def expected_mask(self):
        return points_in_box(self.points, self.gt_box)

    @property
    def foreground(self):
        return self.points[self.gt_mask]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.gt_box == other.gt_box and np.array_equal(self.points, other.points)
                and np.array_equal(self.gt_mask, other.gt_mask))


@dataclass
class Sequence:
    name: str
    category: str
    frames: List[Frame] = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    @property
    def size(self):
        return self.frames[0].gt_box.size

    @property
    def boxes(self):
        return [frame.gt_box for frame in self.frames]

    def window(self, start, length):
        return Sequence(self.name, self.category, self.frames[start:start + length])
