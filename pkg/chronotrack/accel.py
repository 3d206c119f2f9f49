"""
Optional numba acceleration. ``try_jit`` compiles with numba when it is importable
and hands back the plain Python function otherwise.
"""
import logging


logger = logging.getLogger(__name__)

try:
    import numba
    has_numba = True
except ImportError:  # pragma: no cover
    numba = None
    has_numba = False


def try_jit(*args, **kwargs):
    if args and callable(args[0]):
        return _jit(args[0])

    def decorator(func):
        return _jit(func, **kwargs)
    return decorator


def _jit(func, **kwargs):
    if not has_numba:
        logger.debug('numba not available, %s runs as plain Python', func.__name__)
        return func
    kwargs.setdefault('nopython', True)
    kwargs.setdefault('cache', False)
    return numba.jit(**kwargs)(func)
