import hashlib

import numpy as np

from chronotrack.settings import settings


def derive_seed(*parts):
    """
    Stable 63-bit seed from any printable parts, e.g. ``derive_seed('seq-3', 17)``.
    """
    digest = hashlib.sha256('/'.join(str(part) for part in parts).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little') >> 1


def rng_for(*parts):
    return np.random.default_rng(derive_seed(*parts))


def float_dtype():
    return np.dtype(settings.FLOAT_DTYPE)


def as_float_array(values):
    return np.asarray(values, dtype=float_dtype())
