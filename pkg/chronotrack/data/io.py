"""
Line-oriented text files for sequences and tracker output.

Sequence file::

    SEQ v1 <category> <T> <w> <l> <h>
    FRAME <t> <n> <cx> <cy> <cz> <theta>
    <x> <y> <z> <mask-bit>      (n lines)

Boxes file::

    BOXES v1 <T-1>
    <t> <cx> <cy> <cz> <theta>  (t = 2..T)

Floats are written with ``repr`` so a read gives back the exact value.
"""
import logging
import os

import numpy as np

from chronotrack.data.sequence import Frame, Sequence
from chronotrack.exceptions import GeometryError, SequenceFormatError
from chronotrack.geometry import Box3D


logger = logging.getLogger(__name__)

SEQUENCE_SUFFIX = '.seq'
BOXES_SUFFIX = '.boxes'


def _number(value):
    return repr(float(value))


def format_sequence(sequence):
    w, l, h = sequence.size
    lines = ['SEQ v1 %s %d %s %s %s' % (sequence.category, len(sequence), _number(w), _number(l), _number(h))]
    for t, frame in enumerate(sequence.frames, 1):
        box = frame.gt_box
        lines.append('FRAME %d %d %s %s %s %s' % ((t, len(frame.points)) + tuple(_number(v) for v in box.center)
                                                  + (_number(box.heading),)))
        for point, bit in zip(frame.points, frame.gt_mask):
            lines.append('%s %s %s %d' % (_number(point[0]), _number(point[1]), _number(point[2]), int(bit)))
    return '\n'.join(lines) + '\n'


def write_sequence(sequence, path):
    with open(path, 'w') as handle:
        handle.write(format_sequence(sequence))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.number = 0

    def next(self, missing):
        while self.number < len(self.lines):
            self.number += 1
            line = self.lines[self.number - 1].strip()
            if line:
                return line.split()
        raise SequenceFormatError(self.number + 1, 'unexpected end of file, missing %s' % missing)

    def fail(self, message):
        raise SequenceFormatError(self.number, message)

    def floats(self, parts, what):
        try:
            return [float(part) for part in parts]
        except ValueError:
            self.fail('malformed %s' % what)

    def ints(self, parts, what):
        try:
            return [int(part) for part in parts]
        except ValueError:
            self.fail('malformed %s' % what)

    def counts(self, parts, what):
        values = self.ints(parts, what)
        if any(value < 0 for value in values):
            self.fail('negative %s' % what)
        return values


def _box(lines, center, heading, size):
    try:
        return Box3D(center, heading, size)
    except GeometryError as error:
        lines.fail(str(error))


def parse_sequence(text, name='sequence'):
    lines = _Lines(text)
    header = lines.next('SEQ header')
    if len(header) != 7 or header[:2] != ['SEQ', 'v1']:
        lines.fail('expected "SEQ v1 <category> <T> <w> <l> <h>"')
    category = header[2]
    count, = lines.counts(header[3:4], 'frame count')
    size = lines.floats(header[4:7], 'box size')
    frames = []
    for t in range(1, count + 1):
        head = lines.next('FRAME %d' % t)
        if len(head) != 7 or head[0] != 'FRAME':
            lines.fail('expected "FRAME %d <n> <cx> <cy> <cz> <theta>"' % t)
        index, n = lines.counts(head[1:3], 'frame header')
        if index != t:
            lines.fail('expected frame %d, found %d' % (t, index))
        values = lines.floats(head[3:7], 'frame box')
        box = _box(lines, values[:3], values[3], size)
        points = np.zeros((n, 3))
        mask = np.zeros(n, dtype=bool)
        for row in range(n):
            parts = lines.next('point %d of FRAME %d' % (row + 1, t))
            if len(parts) != 4 or parts[3] not in ('0', '1'):
                lines.fail('expected "<x> <y> <z> <mask-bit>"')
            points[row] = lines.floats(parts[:3], 'point')
            mask[row] = parts[3] == '1'
        frame = Frame(points, box, mask)
        expected = frame.expected_mask()
        if not np.array_equal(expected, mask):
            logger.warning('%s frame %d: stored mask disagrees with the box on %d points, recomputed',
                           name, t, int(np.count_nonzero(expected != mask)))
            frame.gt_mask = expected
        frames.append(frame)
    return Sequence(name, category, frames)


def read_sequence(path):
    with open(path) as handle:
        return parse_sequence(handle.read(), name=sequence_name(path))


def sequence_name(path):
    return os.path.splitext(os.path.basename(path))[0]


def format_boxes(boxes):
    lines = ['BOXES v1 %d' % len(boxes)]
    for t, box in enumerate(boxes, 2):
        lines.append('%d %s' % (t, ' '.join(_number(v) for v in box.center + (box.heading,))))
    return '\n'.join(lines) + '\n'


def write_boxes(boxes, path):
    with open(path, 'w') as handle:
        handle.write(format_boxes(boxes))


def parse_boxes(text, size):
    """
    Boxes carry no size of their own; ``size`` comes from the sequence.
    """
    lines = _Lines(text)
    header = lines.next('BOXES header')
    if len(header) != 3 or header[:2] != ['BOXES', 'v1']:
        lines.fail('expected "BOXES v1 <count>"')
    count, = lines.counts(header[2:], 'box count')
    boxes = []
    for t in range(2, count + 2):
        parts = lines.next('box for frame %d' % t)
        if len(parts) != 5:
            lines.fail('expected "<t> <cx> <cy> <cz> <theta>"')
        index, = lines.ints(parts[:1], 'frame index')
        if index != t:
            lines.fail('expected frame %d, found %d' % (t, index))
        values = lines.floats(parts[1:], 'box')
        boxes.append(_box(lines, values[:3], values[3], size))
    return boxes


def read_boxes(path, size):
    with open(path) as handle:
        return parse_boxes(handle.read(), size)


def write_dataset(sequences, directory):
    os.makedirs(directory, exist_ok=True)
    for sequence in sequences:
        write_sequence(sequence, os.path.join(directory, sequence.name + SEQUENCE_SUFFIX))


def dataset_paths(directory, suffix=SEQUENCE_SUFFIX):
    return sorted(os.path.join(directory, name) for name in os.listdir(directory) if name.endswith(suffix))


def read_dataset(directory):
    return [read_sequence(path) for path in dataset_paths(directory)]
