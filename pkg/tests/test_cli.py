import json

import numpy as np
import pytest

from pyphm import __version__
from pyphm.cli import (main, make_parser, load_splits, EXIT_OK, EXIT_FAILED,
                       EXIT_CONFIG)
from pyphm.config import resolve_config
from pyphm.data import channel_stats, PIXELS, STATS_FILE

SMOKE = ['--dataset', 'synthetic', '--classes', '10', '--width-divisor', '8',
         '--synthetic-per-class', '2', '--synthetic-size', '16',
         '--epochs', '2', '--batch', '10']


def test_help_and_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(['--help'])
    assert info.value.code == 0
    assert 'gradcheck' in capsys.readouterr().out
    with pytest.raises(SystemExit) as info:
        main(['--version'])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_subcommand_is_required():
    with pytest.raises(SystemExit) as info:
        make_parser().parse_args([])
    assert info.value.code == 2


def test_train_synthetic_smoke(tmp_path, capsys):
    run_dir = tmp_path / 'run'
    assert main(['train'] + SMOKE + ['--run-dir', str(run_dir)]) == EXIT_OK
    out = capsys.readouterr().out
    lines = (run_dir / 'metrics.jsonl').read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[-1])['epoch'] == 2
    echoed = (run_dir / 'config.json').read_text()
    assert out.startswith(echoed)
    assert json.loads(echoed)['dataset'] == 'synthetic'
    assert 'best val top-1' in out


def test_config_file_and_flags(tmp_path, capsys):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'arch': 'vphm18', 'epochs': 9}))
    assert main(['analyze', '--config', str(path), '--epochs', '3',
                 '--classes', '10', '--width-divisor', '16']) == EXIT_OK
    echoed = json.loads(capsys.readouterr().out.split('}\n')[0] + '}')
    assert (echoed['arch'], echoed['epochs']) == ('vphm18', 3)


def test_indivisible_classes_is_a_config_error(capsys):
    assert main(['analyze', '--arch', 'vphm50', '--classes', '29']) == \
        EXIT_CONFIG
    assert '29' in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text('{"learning_rate": 0.1}')
    assert main(['train', '--config', str(path)]) == EXIT_CONFIG


def test_missing_cifar_files(tmp_path, capsys):
    assert main(['train', '--data-root', str(tmp_path),
                 '--epochs', '1']) == EXIT_CONFIG
    assert 'PYPHM_DATA_ROOT' in capsys.readouterr().err


def test_analyze_against_published(capsys):
    assert main(['analyze', '--arch', 'resnet18']) == EXIT_OK
    out = capsys.readouterr().out
    assert 'published' in out and 'params True' in out


def test_analyze_compare(capsys):
    assert main(['analyze', '--compare', '18', '--classes', '10']) == EXIT_OK
    out = capsys.readouterr().out
    assert 'vphm18' in out and 'qphm18' in out


def test_verify(capsys):
    assert main(['verify']) == EXIT_OK
    assert 'FAIL' not in capsys.readouterr().out


def test_gradcheck_exit_codes(capsys):
    assert main(['gradcheck', '--menu', 'phm,quatconv']) == EXIT_OK
    assert main(['gradcheck', '--menu', 'faulty']) == EXIT_FAILED
    assert 'flipped backward' in capsys.readouterr().out
    assert main(['gradcheck', '--menu', 'octonion']) == EXIT_CONFIG


def test_wrongly_typed_config_value(tmp_path, capsys):
    path = tmp_path / 'run.json'
    path.write_text('{"epochs": "2", "dataset": "synthetic"}')
    assert main(['train', '--config', str(path)]) == EXIT_CONFIG
    assert 'epochs' in capsys.readouterr().err


def test_analyze_small_input_with_latency(capsys):
    # the last stage is 1 x 1 here, so train-mode batch norm cannot run
    assert main(['analyze', '--arch', 'qphm18', '--dataset', 'synthetic',
                 '--synthetic-size', '8', '--classes', '4',
                 '--width-divisor', '16', '--reps', '3']) == EXIT_OK
    assert 'latency' in capsys.readouterr().out


def test_deterministic_flag_can_be_turned_off():
    parser = make_parser()
    assert 'deterministic' not in vars(parser.parse_args(['verify']))
    assert parser.parse_args(['train', '--no-deterministic']).deterministic \
        is False
    assert parser.parse_args(['train', '--deterministic']).deterministic


def test_cifar_train_statistics_are_cached(tmp_path):
    folder = tmp_path / 'cifar-10-batches-bin'
    folder.mkdir()
    rng = np.random.default_rng(0)
    names = ['data_batch_%d.bin' % i for i in range(1, 6)] + ['test_batch.bin']
    for label, name in enumerate(names):
        record = np.concatenate([[label], rng.integers(0, 256, PIXELS)])
        record.astype(np.uint8).tofile(folder / name)
    cfg = resolve_config(flags={'dataset': 'cifar10', 'classes': 10,
                                'data_root': str(tmp_path)})
    train_split, _, stats = load_splits(cfg)
    np.testing.assert_allclose(stats[0], channel_stats(train_split)[0])
    cache = folder / STATS_FILE
    assert cache.exists()
    cache.write_text(json.dumps({'mean': [0.5] * 3, 'std': [0.2] * 3}))
    _, _, stats = load_splits(cfg)
    np.testing.assert_array_equal(stats[0], [0.5] * 3)
    cfg = resolve_config(flags={'dataset': 'synthetic', 'classes': 3,
                                'synthetic_per_class': 2,
                                'synthetic_size': 8})
    assert load_splits(cfg)[2] is None
