# -*- coding: utf-8 -*-
"""
Parameter counts, multiply-accumulate counts and forward latency of the
networks in pyphm.models.

MACs follow the layer plan for one image: O*C*kH*kW*H'*W' for every
convolution (a quaternion or vectormap convolution is N*N real
convolutions at 1/N of the channels, which comes to the same count) and
k*d for the dense or PHM backend, whose weight is the materialized k x d
operator. flops is 2 * macs. Batch norm, ReLU and pooling are not counted.
"""
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import structlog
from uncertainties import ufloat

from .. import styles
from ..models import build_model, preset, FAMILIES
from ..tensor import Tensor, no_grad
from . import referencevalues

log = structlog.get_logger()


@dataclass
class BudgetReport:
    """
    Budget of one model. breakdown maps layer paths to parameter counts
    and layer_macs maps them to MACs; params always equals the sum of
    breakdown.
    """
    arch: str
    params: int = None
    breakdown: dict = field(default_factory=dict)
    macs: int = None
    flops: int = None
    layer_macs: dict = field(default_factory=dict)
    input_shape: tuple = None
    phm_n: int = None
    latency_ms: object = None
    machine: str = None

    def merge(self, other):
        """Fill every field other has and self lacks"""
        for name in ('params', 'macs', 'flops', 'input_shape', 'latency_ms',
                     'machine', 'phm_n'):
            if getattr(self, name) is None:
                setattr(self, name, getattr(other, name))
        self.breakdown = self.breakdown or other.breakdown
        self.layer_macs = self.layer_macs or other.layer_macs
        return self

    def summary(self):
        lines = ['%s' % self.arch]
        if self.params is not None:
            lines.append('  parameters  %12d  (%.2fM)'
                         % (self.params, self.params / 1e6))
        if self.macs is not None:
            lines.append('  MACs        %12d  (%.3fG), FLOPs %.3fG'
                         % (self.macs, self.macs / 1e9, self.flops / 1e9))
        lines.append('  backend     %s' % ('dense' if self.phm_n is None else
                                         'PHM n=%d' % self.phm_n))
        if self.latency_ms is not None:
            lines.append('  latency     %s ms (%s)'
                         % (self.latency_ms, self.machine))
        return '\n'.join(lines)

    def record(self):
        """Flat dict for tables and JSON output"""
        out = {'arch': self.arch, 'params': self.params, 'macs': self.macs,
               'flops': self.flops, 'phm_n': self.phm_n}
        if self.latency_ms is not None:
            out['latency_ms'] = self.latency_ms.nominal_value
            out['latency_spread_ms'] = self.latency_ms.std_dev
            out['machine'] = self.machine
        return out


def count_params(model, printout=False):
    """Every trainable element, grouped by layer path"""
    breakdown = {}
    for name, param in model.named_parameters():
        layer = name.rsplit('.', 1)[0]
        breakdown[layer] = breakdown.get(layer, 0) + int(param.size)
    report = BudgetReport(model.spec.name, params=sum(breakdown.values()),
                          breakdown=breakdown, phm_n=model.phm_n)
    if printout is True:
        print(report.summary())
    return report


def estimate_flops(model, input_shape=None, printout=False):
    """
    MACs and FLOPs of one forward pass of a single image of input_shape
    ([C, H, W], defaulting to the spec's). Depends on shapes only.
    """
    records = model.trace(input_shape)
    layer_macs = {r.name: r.macs for r in records if r.macs}
    macs = int(sum(layer_macs.values()))
    spec = model.spec
    if input_shape is None:
        input_shape = (spec.in_channels, spec.input_size, spec.input_size)
    report = BudgetReport(spec.name, macs=macs, flops=2 * macs,
                          layer_macs=layer_macs,
                          input_shape=tuple(input_shape), phm_n=model.phm_n)
    if printout is True:
        print(report.summary())
    return report


def machine_descriptor():
    return '%s, %s, %d cpus, numpy %s' % (
        platform.platform(), platform.processor() or platform.machine(),
        os.cpu_count() or 1, np.__version__)


def measure_latency(model, input_shape=None, reps=51, warmup=3,
                    printout=False):
    """
    Median wall time of a single-image forward pass over reps timed runs,
    after warmup untimed ones, as ufloat(median, median absolute
    deviation) in milliseconds. Runs in eval mode without recording a
    tape. Batch-norm running statistics that are still uninitialized are
    seeded from one train-mode batch of two random images; the model's
    mode and statistics are restored afterwards. Wall times depend on the
    machine and on how many threads the BLAS library uses.
    """
    if reps < 1:
        raise ValueError('reps must be at least 1')
    spec = model.spec
    if input_shape is None:
        input_shape = (spec.in_channels, spec.input_size, spec.input_size)
    x = Tensor(np.zeros((1,) + tuple(input_shape)))
    buffers = [stats for _, stats in model.named_buffers()]
    saved = [(stats, stats.mean, stats.var) for stats in buffers]
    was_training = model.training
    times = []
    with no_grad():
        if any(stats.mean is None for stats in buffers):
            rng = np.random.default_rng(0)
            model.train()
            model(Tensor(rng.standard_normal((2,) + tuple(input_shape))))
        model.eval()
        for i in range(warmup + reps):
            started = time.perf_counter()
            model(x)
            elapsed = time.perf_counter() - started
            if i >= warmup:
                times.append(elapsed * 1e3)
    if was_training:
        model.train()
    else:
        model.eval()
    for stats, mean, var in saved:
        stats.mean, stats.var = mean, var
    median = float(np.median(times))
    spread = float(np.median(np.abs(np.array(times) - median)))
    report = BudgetReport(spec.name, input_shape=tuple(input_shape),
                          latency_ms=ufloat(median, spread),
                          machine=machine_descriptor(), phm_n=model.phm_n)
    log.info('latency measured', arch=spec.name, median_ms=median,
             reps=reps)
    if printout is True:
        print(report.summary())
    return report


def budget(model, input_shape=None, latency_reps=0, printout=False):
    """count_params and estimate_flops (and measure_latency) in one report"""
    report = count_params(model).merge(estimate_flops(model, input_shape))
    if latency_reps:
        report.merge(measure_latency(model, input_shape, latency_reps))
    if printout is True:
        print(report.summary())
    return report


def compare_depth(depth, classes=100, input_size=32, latency_reps=0,
                  families=None, printout=False):
    """
    Table of computed budgets for every family at one depth next to the
    published values, one row per architecture
    """
    rows = []
    for family in (families or FAMILIES):
        arch = '%s%d' % (family, depth)
        spec = preset(arch, classes=classes, input_size=input_size)
        report = budget(build_model(spec), latency_reps=latency_reps)
        row = report.record()
        row.update(family=family, params_m=report.params / 1e6,
                   macs_g=report.macs / 1e9)
        published = referencevalues.lookup(arch)
        if published is not None and classes == 100 and input_size == 32:
            row['published_params_m'] = published['params_m']
            row['published_flops_g'] = published['flops_g']
            row['params_deviation'] = (row['params_m'] /
                                       published['params_m'] - 1.)
            row['macs_deviation'] = row['macs_g'] / published['flops_g'] - 1.
        rows.append(row)
    table = pd.DataFrame(rows).set_index('arch')
    if printout is True:
        columns = [c for c in ('params_m', 'published_params_m', 'macs_g',
                               'published_flops_g', 'phm_n', 'latency_ms')
                   if c in table.columns]
        print(table[columns].to_string(float_format=lambda v: '%.3f' % v))
    return table


def plot_budget(table, show_plot=False, figaxis=None):
    """Parameters against MACs for a compare_depth table; returns the axis"""
    if show_plot is False:
        styles.use_headless_backend()
    fig, ax = styles.plot_budget_outline(figaxis=figaxis)
    for arch, row in table.iterrows():
        ax.plot(row['macs_g'], row['params_m'], **styles.family_style(arch))
        if 'published_params_m' in table.columns and \
                not pd.isna(row.get('published_params_m')):
            ax.plot(row['published_flops_g'], row['published_params_m'],
                    **dict(styles.style_published, label=None))
    ax.legend(loc='best', fontsize='small')
    if show_plot is True:
        import matplotlib.pyplot as plt
        plt.show()
    return ax
