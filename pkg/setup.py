#!/usr/bin/env python
from setuptools import find_packages, setup

from chronotrack import __version__


REQUIREMENTS = [
    'numpy>=1.21',
    'scipy>=1.7',
    'shapely>=1.8',
]

EXTRAS = {
    'accel': ['numba>=0.55'],
}


CLASSIFIERS = [
    'Development Status :: 3 - Alpha',
    'Environment :: Console',
    'Intended Audience :: Science/Research',
    'License :: OSI Approved :: BSD License',
    'Operating System :: OS Independent',
    'Programming Language :: Python',
    'Programming Language :: Python :: 3',
    'Programming Language :: Python :: 3.8',
    'Programming Language :: Python :: 3.9',
    'Programming Language :: Python :: 3.10',
    'Programming Language :: Python :: 3.11',
    'Topic :: Scientific/Engineering',
    'Topic :: Scientific/Engineering :: Artificial Intelligence',
]


setup(
    name='chronotrack',
    version=__version__,
    license='BSD-3-Clause',
    description='Token-memory single object tracking for point-cloud sequences',
    long_description=open('README.rst').read(),
    long_description_content_type='text/x-rst',
    packages=find_packages(exclude=('tests', 'tests.*')),
    include_package_data=True,
    zip_safe=False,
    install_requires=REQUIREMENTS,
    extras_require=EXTRAS,
    classifiers=CLASSIFIERS,
    entry_points={
        'console_scripts': ['chronotrack=chronotrack.cli:main'],
    },
    test_suite='tests.settings.run',
)
