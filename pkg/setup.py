#!/usr/bin/env python

from setuptools import setup, find_packages

setup(
    name='tachyon-lab',
    version='0.1.0',
    description='Tachyonlike wavepackets of an unstable scalar field: spectral evolution, '
    'retarded Green functions and Gaussian-state overlaps',
    author='',
    author_email='',
    install_requires=['torch>=1.8.0', 'pytorch-lightning', 'numpy'],
    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    package_data={'tachyon_lab': ['configs/*.json']},
    entry_points={'console_scripts': ['tachyon-lab=tachyon_lab.cli:cli_main']},
)
