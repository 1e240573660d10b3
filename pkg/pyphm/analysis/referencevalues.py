# -*- coding: utf-8 -*-
"""
Published parameter counts, FLOPs, latencies and CIFAR accuracies of the
ResNet variants at 18, 34 and 50 layers (100 output classes for the
budgets). The data is in referencevalues.csv in this folder.

The FLOPs column counts one multiply-accumulate as one operation, so it
is compared against BudgetReport.macs.
"""
import os

import pandas as pd

import pyphm

file = os.path.join(pyphm.__path__[0], 'analysis', 'referencevalues.csv')

published = pd.read_csv(file)
published = published.dropna(how='all').set_index('arch')

# relative tolerances for comparing computed budgets with the table
PARAMS_TOLERANCE = {'resnet': 0.02, 'quat': 0.03, 'vect': 0.03,
                    'qphm': 0.03, 'vphm': 0.03, 'rphm': 0.03}
MACS_TOLERANCE = 0.10


def lookup(arch):
    """Published row of one architecture, or None when it is not tabulated"""
    if arch not in published.index:
        return None
    return published.loc[arch]


def within_tolerance(arch, params=None, macs=None):
    """
    Whether computed params (count) and macs (count) agree with the table.
    Returns a dict with one boolean per quantity given.
    """
    row = lookup(arch)
    if row is None:
        raise KeyError('%s is not in %s' % (arch, file))
    verdict = {}
    if params is not None:
        expected = row['params_m'] * 1e6
        verdict['params'] = (abs(params - expected) / expected <=
                             PARAMS_TOLERANCE[row['family']])
    if macs is not None:
        expected = row['flops_g'] * 1e9
        verdict['macs'] = abs(macs - expected) / expected <= MACS_TOLERANCE
    return verdict
