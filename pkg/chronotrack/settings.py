"""
Package-wide knobs. Assign to ``settings.<NAME>`` before use to override.
"""
import os
from types import SimpleNamespace


settings = SimpleNamespace()

settings.FLOAT_DTYPE = getattr(settings, 'FLOAT_DTYPE', os.environ.get('CHRONOTRACK_FLOAT_DTYPE', 'float64'))
settings.CHECK_FINITE = getattr(settings, 'CHECK_FINITE', True)
settings.LOG_LEVEL = getattr(settings, 'LOG_LEVEL', os.environ.get('CHRONOTRACK_LOG_LEVEL', 'INFO'))
settings.WORKERS = getattr(settings, 'WORKERS', int(os.environ.get('CHRONOTRACK_WORKERS', '1')))
settings.SLOW_TESTS = getattr(settings, 'SLOW_TESTS', bool(os.environ.get('CHRONOTRACK_SLOW_TESTS')))
