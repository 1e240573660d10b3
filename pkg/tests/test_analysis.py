import numpy as np
import pandas as pd
import pytest

from pyphm.analysis import (budget, count_params, estimate_flops,
                            measure_latency, compare_depth, plot_budget)
from pyphm.analysis import referencevalues
from pyphm.layers import Conv2d
from pyphm.models import build_model, preset
from pyphm.tensor import ConvSpec, Tensor, no_grad

# parameter counts at 100 classes, to the nearest thousand
EXPECTED_PARAMS = {'resnet18': 11.220e6, 'rphm18': 11.182e6,
                   'quat18': 8.650e6, 'qphm18': 8.583e6,
                   'vect18': 7.441e6, 'vphm18': 7.384e6,
                   'resnet34': 21.328e6,
                   'resnet50': 23.705e6,
                   'quat50': 18.403e6, 'qphm50': 18.134e6,
                   'vect50': 15.819e6, 'vphm50': 15.588e6}
EXPECTED_MACS = {'resnet18': 0.555e9, 'resnet34': 1.159e9,
                 'resnet50': 1.298e9}


@pytest.fixture(scope='module')
def reports18():
    """Budgets of every family at depth 18"""
    return {arch: budget(build_model(preset(arch)))
            for arch in ('resnet18', 'rphm18', 'quat18', 'qphm18', 'vect18',
                         'vphm18')}


def test_single_conv_flops():
    conv = Conv2d(1, 1, ConvSpec.same(3))
    assert 2 * conv.macs((1, 32, 32)) == 18432


def test_depth18_parameter_counts(reports18):
    for arch, report in reports18.items():
        assert report.params == pytest.approx(EXPECTED_PARAMS[arch], abs=1e3)
        assert report.params == sum(report.breakdown.values())
        assert report.flops == 2 * report.macs


def test_depth18_orderings(reports18):
    params = {arch: report.params for arch, report in reports18.items()}
    assert params['resnet18'] > params['rphm18']
    assert params['quat18'] > params['qphm18'] > params['vect18'] > \
        params['vphm18']
    assert reports18['qphm18'].phm_n == 4
    assert reports18['vphm18'].phm_n == 5
    assert reports18['quat18'].phm_n is None
    # frontends are identical, only the head shrinks
    head = reports18['quat18'].breakdown['head']
    assert reports18['qphm18'].breakdown['head'] == (head - 100) // 4 + 100


@pytest.mark.parametrize('arch', ['resnet34', 'resnet50', 'quat50', 'qphm50',
                                  'vect50', 'vphm50'])
def test_deeper_parameter_counts(arch):
    report = count_params(build_model(preset(arch)))
    assert report.params == pytest.approx(EXPECTED_PARAMS[arch], abs=1e3)


@pytest.mark.parametrize('arch', sorted(EXPECTED_MACS))
def test_real_resnet_macs(arch):
    report = estimate_flops(build_model(preset(arch)))
    assert report.macs == pytest.approx(EXPECTED_MACS[arch], abs=1e6)
    assert report.input_shape == (3, 32, 32)
    assert referencevalues.within_tolerance(arch, macs=report.macs)['macs']


def test_published_parameter_counts(reports18):
    for arch, report in reports18.items():
        assert referencevalues.within_tolerance(arch,
                                                params=report.params)['params']
    assert referencevalues.lookup('resnet101') is None
    with pytest.raises(KeyError):
        referencevalues.within_tolerance('resnet101', params=1)


def test_layer_macs_add_up():
    model = build_model(preset('vphm18', classes=10, width_divisor=16))
    report = estimate_flops(model)
    assert report.macs == sum(report.layer_macs.values())
    assert report.layer_macs['head'] == model.spec.feature_dim * 10
    assert report.layer_macs['stem'] == 3 * 6 * 9 * 32 * 32


def test_latency(capsys):
    model = build_model(preset('qphm18', classes=10, width_divisor=16))
    report = measure_latency(model, reps=1, warmup=0, printout=True)
    assert report.latency_ms.nominal_value > 0.
    assert report.latency_ms.std_dev == 0.
    assert 'numpy' in report.machine
    assert 'latency' in capsys.readouterr().out
    assert all(stats.mean is None for _, stats in model.named_buffers())
    with pytest.raises(ValueError):
        measure_latency(model, reps=0)


def test_latency_at_one_by_one_final_stage():
    # train-mode batch norm cannot run on one 1 x 1 image
    model = build_model(preset('qphm18', classes=4, width_divisor=16,
                               input_size=8))
    report = measure_latency(model, reps=2, warmup=1)
    assert report.latency_ms.nominal_value > 0.
    assert model.training
    assert all(stats.mean is None for _, stats in model.named_buffers())


def test_latency_keeps_eval_mode_and_running_stats():
    model = build_model(preset('qphm18', classes=4, width_divisor=16,
                               input_size=8))
    rng = np.random.default_rng(1)
    with no_grad():
        model(Tensor(rng.normal(size=(4, 3, 8, 8))))
    model.eval()
    before = [(stats.mean, stats.var) for _, stats in model.named_buffers()]
    measure_latency(model, reps=1, warmup=0)
    after = [(stats.mean, stats.var) for _, stats in model.named_buffers()]
    assert not model.training
    assert all(a[0] is b[0] and a[1] is b[1] for a, b in zip(before, after))


def test_budget_summary_and_record():
    model = build_model(preset('qphm18', classes=12, width_divisor=16))
    report = budget(model, latency_reps=1)
    assert 'PHM n=4' in report.summary()
    record = report.record()
    assert record['arch'] == 'qphm18'
    assert set(record) >= {'params', 'macs', 'latency_ms', 'machine'}


def test_compare_depth_table():
    table = compare_depth(18, families=('resnet', 'qphm'))
    assert list(table.index) == ['resnet18', 'qphm18']
    assert table.loc['resnet18', 'published_params_m'] == 11.1
    assert abs(table.loc['qphm18', 'params_deviation']) < 0.03
    assert pd.isna(table.loc['resnet18', 'phm_n'])
    assert plot_budget(table) is not None
    narrow = compare_depth(18, classes=10, families=('vect',))
    assert 'published_params_m' not in narrow.columns
