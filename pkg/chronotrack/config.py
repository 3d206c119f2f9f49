"""
Tracker and training configuration, plus the flat ``key = value`` file format
both are read from.
"""
import dataclasses
from dataclasses import dataclass, fields
from typing import Tuple

from chronotrack.exceptions import ConfigError


@dataclass(frozen=True)
class TrackerConfig:
    num_points: int = 1024
    num_tokens: int = 32
    dim: int = 128
    mu_layers: int = 3
    mfr_layers: int = 2
    heads: int = 4
    mlp_ratio: int = 2
    knn_k: int = 16
    encoder_widths: Tuple[int, ...] = (64, 128, 128)
    tau_mask: float = 0.5
    confidence_floor: float = 0.2
    search_margin_xy: float = 2.0
    search_margin_z: float = 1.0
    bg_capacity: int = 1
    update_memory: bool = True

    def __post_init__(self):
        for name in ('num_points', 'num_tokens', 'dim', 'mu_layers', 'mfr_layers', 'heads', 'mlp_ratio',
                     'knn_k', 'bg_capacity'):
            if getattr(self, name) <= 0:
                raise ConfigError(name, 'must be positive')
        for name in ('tau_mask', 'confidence_floor'):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(name, 'must lie in (0, 1)')
        for name in ('search_margin_xy', 'search_margin_z'):
            if getattr(self, name) <= 0:
                raise ConfigError(name, 'must be positive')
        if len(self.encoder_widths) != 3 or min(self.encoder_widths) <= 0:
            raise ConfigError('encoder_widths', 'needs three positive widths')
        if self.encoder_widths[-1] != self.dim:
            raise ConfigError('encoder_widths', 'last width must equal dim')
        if self.dim % self.heads:
            raise ConfigError('heads', 'must divide dim')

    @property
    def num_seeds(self):
        return -(-self.num_points // 8)


@dataclass(frozen=True)
class TrainConfig:
    window: int = 8
    batch_size: int = 4
    learning_rate: float = 1e-3
    decay_factor: float = 0.2
    decay_every: int = 15
    epochs: int = 30
    steps_per_epoch: int = 50
    tau_dist: float = 0.3
    tau_cycle: float = 0.1
    lambda_m: float = 1.0
    lambda_c: float = 1.0
    use_tc: bool = True
    use_mcc: bool = True
    box_jitter_xy: float = 0.15
    box_jitter_heading: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float = 0.0
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError('window', 'must be at least 2')
        for name in ('batch_size', 'decay_every', 'epochs', 'steps_per_epoch', 'workers'):
            if getattr(self, name) <= 0:
                raise ConfigError(name, 'must be positive')
        for name in ('learning_rate', 'decay_factor', 'tau_cycle', 'adam_eps'):
            if getattr(self, name) <= 0:
                raise ConfigError(name, 'must be positive')
        for name in ('tau_dist', 'lambda_m', 'lambda_c', 'box_jitter_xy', 'box_jitter_heading', 'max_grad_norm'):
            if getattr(self, name) < 0:
                raise ConfigError(name, 'must not be negative')
        for name in ('adam_beta1', 'adam_beta2'):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(name, 'must lie in [0, 1)')


def parse_value(field, text):
    try:
        if field.type is bool:
            lowered = text.lower()
            if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(text)
            return lowered in ('true', '1', 'yes')
        if field.type is int:
            return int(text)
        if field.type is float:
            return float(text)
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ConfigError(field.name, 'cannot parse %r' % text)


def _format_value(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, tuple):
        return ','.join(str(part) for part in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text, tracker=None, train=None):
    """
    Overlay ``key = value`` lines onto ``tracker`` / ``train`` (defaults when
    omitted). Unknown keys are errors.
    """
    tracker = tracker or TrackerConfig()
    train = train or TrainConfig()
    tracker_fields = {f.name: f for f in fields(TrackerConfig)}
    train_fields = {f.name: f for f in fields(TrainConfig)}
    tracker_values, train_values = {}, {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError('line %d' % number, 'expected key = value')
        key, value = (part.strip() for part in line.split('=', 1))
        if key in tracker_fields:
            tracker_values[key] = parse_value(tracker_fields[key], value)
        elif key in train_fields:
            train_values[key] = parse_value(train_fields[key], value)
        else:
            raise ConfigError(key, 'unknown configuration key')
    return dataclasses.replace(tracker, **tracker_values), dataclasses.replace(train, **train_values)


def load_config(path, tracker=None, train=None):
    with open(path) as handle:
        return parse_config(handle.read(), tracker=tracker, train=train)


def dump_config(tracker, train=None):
    lines = ['# tracker']
    lines += ['%s = %s' % (f.name, _format_value(getattr(tracker, f.name))) for f in fields(tracker)]
    if train is not None:
        lines.append('# training')
        lines += ['%s = %s' % (f.name, _format_value(getattr(train, f.name))) for f in fields(train)]
    return '\n'.join(lines) + '\n'
