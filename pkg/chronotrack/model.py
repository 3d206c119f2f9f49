"""
The full parameter set of a tracker: encoder, memory (tokens, updater,
refiner) and decode head, as one ordered ``dict`` of named arrays.
"""
import numpy as np

from chronotrack.memory import init_memory_params
from chronotrack.perception.decoder import init_decoder
from chronotrack.perception.encoder import init_encoder
from chronotrack.utils import derive_seed


def build_parameters(config, seed=0):
    rng = np.random.default_rng(derive_seed('parameters', seed))
    params = {}
    init_encoder(params, config, rng)
    init_memory_params(params, config, rng)
    init_decoder(params, config, rng)
    return params


def parameter_shapes(params):
    return {name: tuple(np.shape(value)) for name, value in params.items()}


def parameter_count(params):
    return int(sum(np.size(value) for value in params.values()))
