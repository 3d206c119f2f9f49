"""
Adam with bias correction and the step-decay learning-rate schedule.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def epoch_of(step, config):
    return step // config.steps_per_epoch


def learning_rate(config, epoch):
    """
    ``learning_rate * decay_factor ** (epoch // decay_every)``.
    """
    return config.learning_rate * config.decay_factor ** (epoch // config.decay_every)


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(np.square(grad))) for grad in grads.values())))


def clip_gradients(grads, max_norm):
    if max_norm <= 0:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return {name: grad * factor for name, grad in grads.items()}


class Adam:
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, **kwargs):
        for key, value in kwargs.items():
            setattr(self, key, value)

    @classmethod
    def from_config(cls, config):
        return cls(beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)

    def init(self, params):
        return AdamState(0, {name: np.zeros_like(value, dtype=np.float64) for name, value in params.items()},
                         {name: np.zeros_like(value, dtype=np.float64) for name, value in params.items()})

    def update(self, params, grads, state, lr):
        """
        One step; returns new ``(params, state)`` and leaves the inputs untouched.
        """
        step = state.step + 1
        correction1 = 1.0 - self.beta1 ** step
        correction2 = 1.0 - self.beta2 ** step
        new_params, m, v = {}, {}, {}
        for name, value in params.items():
            grad = grads[name]
            m[name] = self.beta1 * state.m[name] + (1.0 - self.beta1) * grad
            v[name] = self.beta2 * state.v[name] + (1.0 - self.beta2) * grad * grad
            update = lr * (m[name] / correction1) / (np.sqrt(v[name] / correction2) + self.eps)
            new_params[name] = (value - update).astype(np.asarray(value).dtype)
        return new_params, AdamState(step, m, v)
