"""
Checkpoint files.

::

    CKPT v1
    CONFIG <line count>
    <key = value lines>
    ARRAYS <count>
    <name> <rank> <extents...>
    <byte length>
    <raw little-endian float64 bytes>

Parameters are stored under their own names, Adam moments under
``adam.m.<name>`` / ``adam.v.<name>``, counters under ``meta.*``.
"""
import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from chronotrack.config import TrackerConfig, TrainConfig, dump_config, parse_config
from chronotrack.exceptions import CheckpointError, CheckpointMismatchError, ConfigError
from chronotrack.training.optim import AdamState


logger = logging.getLogger(__name__)

MAGIC = b'CKPT v1'
DTYPE = np.dtype('<f8')
MOMENT_PREFIXES = ('adam.m.', 'adam.v.')


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    optimizer: AdamState
    epoch: int
    tracker_config: TrackerConfig
    train_config: TrainConfig


def save_checkpoint(path, params, optimizer_state, tracker_config, train_config, epoch=0):
    arrays = list(params.items())
    arrays += [('adam.m.%s' % name, value) for name, value in optimizer_state.m.items()]
    arrays += [('adam.v.%s' % name, value) for name, value in optimizer_state.v.items()]
    arrays += [('meta.step', np.array(float(optimizer_state.step))), ('meta.epoch', np.array(float(epoch)))]
    config = dump_config(tracker_config, train_config).splitlines()
    with open(path, 'wb') as handle:
        handle.write(MAGIC + b'\n')
        handle.write(b'CONFIG %d\n' % len(config))
        for line in config:
            handle.write(line.encode('utf-8') + b'\n')
        handle.write(b'ARRAYS %d\n' % len(arrays))
        for name, value in arrays:
            data = np.ascontiguousarray(value, dtype=DTYPE)
            header = '%s %d %s' % (name, data.ndim, ' '.join(str(n) for n in data.shape))
            handle.write(header.rstrip().encode('utf-8'))
            handle.write(b'\n%d\n' % data.nbytes)
            handle.write(data.tobytes())
            handle.write(b'\n')
    logger.info('saved checkpoint %s (%d arrays, step %d)', path, len(arrays), optimizer_state.step)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def line(self, what):
        end = self.data.find(b'\n', self.offset)
        if end < 0:
            raise CheckpointError('truncated checkpoint, missing %s' % what)
        text = self.data[self.offset:end].decode('utf-8')
        self.offset = end + 1
        return text

    def raw(self, count, what):
        if self.offset + count + 1 > len(self.data):
            raise CheckpointError('truncated checkpoint, missing data of %s' % what)
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count + 1
        return chunk


def _counted(text, keyword):
    parts = text.split()
    if len(parts) != 2 or parts[0] != keyword or not parts[1].isdigit():
        raise CheckpointError('expected "%s <count>", got %r' % (keyword, text))
    return int(parts[1])


def read_arrays(data):
    reader = _Reader(data)
    if reader.line('header').encode('utf-8') != MAGIC:
        raise CheckpointError('not a checkpoint (expected %r header)' % MAGIC.decode())
    config = '\n'.join(reader.line('config') for _ in range(_counted(reader.line('CONFIG'), 'CONFIG')))
    arrays = {}
    for _ in range(_counted(reader.line('ARRAYS'), 'ARRAYS')):
        header = reader.line('array header').split()
        try:
            name, rank = header[0], int(header[1])
            shape = tuple(int(n) for n in header[2:])
            length = int(reader.line('byte length of %s' % name))
        except (IndexError, ValueError):
            raise CheckpointError('malformed array header %r' % ' '.join(header))
        if len(shape) != rank or length != int(np.prod(shape, dtype=np.int64)) * DTYPE.itemsize:
            raise CheckpointError('%s: header does not match its byte length' % name)
        arrays[name] = np.frombuffer(reader.raw(length, name), dtype=DTYPE).reshape(shape).astype(np.float64)
    return config, arrays


def check_compatible(stored, expected):
    """
    Compare named shapes; ``expected`` maps names to arrays or shapes.
    """
    mismatches = []
    for name in sorted(set(stored) | set(expected)):
        if name not in expected:
            mismatches.append('%s: not in the model' % name)
        elif name not in stored:
            mismatches.append('%s: missing from the checkpoint' % name)
        else:
            have, want = np.shape(stored[name]), tuple(np.shape(expected[name]) if hasattr(expected[name], 'shape')
                                                       else expected[name])
            if have != want:
                mismatches.append('%s: checkpoint %s vs model %s' % (name, have, want))
    if mismatches:
        raise CheckpointMismatchError(mismatches)


def load_checkpoint(path, model=None):
    """
    Read ``path``; when ``model`` (a parameter dict) is given, every name and
    shape must match it.
    """
    with open(path, 'rb') as handle:
        config_text, arrays = read_arrays(handle.read())
    try:
        tracker_config, train_config = parse_config(config_text)
    except ConfigError as error:
        raise CheckpointError('bad config in checkpoint: %s' % error)
    params = {name: value for name, value in arrays.items()
              if not name.startswith(MOMENT_PREFIXES) and not name.startswith('meta.')}
    if model is not None:
        check_compatible(params, model)
    m = {name: arrays.get('adam.m.%s' % name, np.zeros_like(value)) for name, value in params.items()}
    v = {name: arrays.get('adam.v.%s' % name, np.zeros_like(value)) for name, value in params.items()}
    step = int(arrays['meta.step']) if 'meta.step' in arrays else 0
    epoch = int(arrays['meta.epoch']) if 'meta.epoch' in arrays else 0
    return Checkpoint(params, AdamState(step, m, v), epoch, tracker_config, train_config)
