import pytest

from pyphm.verify import (algebra_suite, layer_suite, gradcheck_suite,
                          SuiteReport, DEFAULT_MENU)


def test_algebra_suite_passes():
    report = algebra_suite()
    assert report.passed, report.summary()
    names = [result.name for result in report.results]
    assert len(names) == len(set(names))
    assert any('(4,2)' in note for note in report.notes)


def test_algebra_suite_covers_norm_bilinearity_and_anchor():
    report = algebra_suite(seed=3)
    names = ' | '.join(result.name for result in report.results)
    assert 'norm is multiplicative (1000 pairs)' in names
    assert 'bilinear (1000 pairs)' in names
    for n in (2, 3, 4, 5):
        assert 'PHM n=%d with only the first block is block diagonal' % n \
            in names
    assert all(result.passed for result in report.results)


def test_layer_suite_passes():
    report = layer_suite(instances=10)
    assert report.passed, report.summary()


def test_gradcheck_suite_passes(capsys):
    report = gradcheck_suite(printout=True)
    assert report.passed, report.summary()
    assert len(report.results) == 5
    assert 'checks passed' in capsys.readouterr().out


def test_gradcheck_catches_wrong_backward():
    report = gradcheck_suite(menu=('faulty',))
    assert not report.passed
    assert report.failures[0].error > 0.1
    assert '[FAIL] flipped backward' in report.summary()


def test_gradcheck_menu_names():
    assert set(DEFAULT_MENU) == {'phm', 'quatconv', 'vectconv', 'block'}
    with pytest.raises(KeyError, match='octonion'):
        gradcheck_suite(menu=('octonion',))


def test_suite_report_counts():
    report = SuiteReport('demo')
    report.add('first', True)
    report.add('second', False, 'off by one', error=1.)
    assert not report.passed
    assert [r.name for r in report.failures] == ['second']
    assert report.summary().endswith('1 of 2 checks passed')
