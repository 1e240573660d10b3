# -*- coding: utf-8 -*-
"""
pyphm setup file
"""
from setuptools import setup
setup(
    description = "quaternion, vectormap and PHM ResNets in numpy",
    version = "0.1.0",
    packages = ['pyphm', 'pyphm.analysis'],
    package_data = {'pyphm.analysis': ['referencevalues.csv']},
    name = "pyphm",
    python_requires = '>=3.9',
    install_requires = ['numpy>=1.20', 'scipy>=1.6', 'pandas>=1.2',
                        'matplotlib>=3.3', 'uncertainties>=3.1',
                        'structlog>=21.1'],
    extras_require = {'tests': ['pytest>=6']},
    entry_points = {'console_scripts': ['pyphm = pyphm.cli:main']},
)
