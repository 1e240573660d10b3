import json

import pytest

from pyphm.config import (RunConfig, load_config, resolve_config, dump_config,
                          resolve_data_root, architecture, train_config)
from pyphm.errors import ConfigError, DivisibilityError


def write(path, values):
    path.write_text(json.dumps(values))
    return str(path)


def test_defaults():
    cfg = RunConfig()
    assert (cfg.arch, cfg.classes, cfg.epochs, cfg.batch) == ('qphm18', 100,
                                                              120, 100)
    assert cfg.menu_entries == ('phm', 'quatconv', 'vectconv', 'block')
    assert train_config(cfg).warmup_epochs == 10


def test_flags_override_file_override_defaults(tmp_path):
    path = write(tmp_path / 'run.json', {'epochs': 5, 'lr': 0.05})
    cfg = resolve_config(path, {'epochs': 7, 'batch': None})
    assert (cfg.epochs, cfg.lr, cfg.batch) == (7, 0.05, 100)


@pytest.mark.parametrize('text, match', [
    ('{"epochs": 2, "colour": "red"}', 'colour'),
    ('{"optimizer": {"lr": 0.1}}', 'optimizer'),
    ('[1, 2]', 'flat JSON object'),
    ('{"epochs": 2,', 'not valid JSON'),
    ])
def test_bad_config_files(tmp_path, text, match):
    path = tmp_path / 'run.json'
    path.write_text(text)
    with pytest.raises(ConfigError, match=match):
        load_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match='cannot read'):
        resolve_config(str(tmp_path / 'absent.json'))


@pytest.mark.parametrize('values, field', [
    ({'epochs': '2'}, 'epochs'),
    ({'epochs': 2.5}, 'epochs'),
    ({'augment': 'no'}, 'augment'),
    ({'seed': True}, 'seed'),
    ({'arch': 18}, 'arch'),
    ({'lr': None}, 'lr'),
    ])
def test_wrongly_typed_values(tmp_path, values, field):
    path = write(tmp_path / 'run.json', values)
    with pytest.raises(ConfigError) as info:
        resolve_config(path)
    assert info.value.field == field


def test_ints_pass_as_floats_and_none_where_allowed(tmp_path):
    path = write(tmp_path / 'run.json', {'lr': 1, 'phm_n': None})
    cfg = resolve_config(path)
    assert cfg.lr == 1 and cfg.phm_n is None


def test_unknown_flag_values():
    with pytest.raises(ConfigError):
        RunConfig().updated({'octaves': 3})
    with pytest.raises(ConfigError, match='dataset'):
        resolve_config(flags={'dataset': 'imagenet'})


def test_dump_and_reload_is_byte_identical(tmp_path):
    cfg = resolve_config(flags={'arch': 'vphm50', 'lr': 0.025,
                                'eps': 1e-6, 'warmup': 3})
    path = tmp_path / 'nested' / 'config.json'
    first = dump_config(cfg, str(path))
    assert path.read_text() == first
    assert dump_config(resolve_config(str(path))) == first
    assert first.endswith('}\n')
    assert list(json.loads(first)) == sorted(json.loads(first))


def test_data_root_precedence(monkeypatch):
    monkeypatch.delenv('PYPHM_DATA_ROOT', raising=False)
    assert resolve_data_root() == './data'
    monkeypatch.setenv('PYPHM_DATA_ROOT', '/srv/cifar')
    assert resolve_data_root() == '/srv/cifar'
    assert resolve_data_root('/tmp/flag') == '/tmp/flag'


def test_architecture_from_run_config():
    spec = architecture(RunConfig(arch='vect18', dataset='synthetic',
                                  classes=10, synthetic_size=16,
                                  width_divisor=4))
    assert spec.input_size == 16 and spec.classes == 10
    assert architecture(RunConfig(arch='qphm50')).input_size == 32
    with pytest.raises(DivisibilityError):
        architecture(RunConfig(arch='vphm50', classes=29))
    with pytest.raises(ConfigError):
        architecture(RunConfig(arch='qphm17'))


def test_train_config_is_validated():
    with pytest.raises(ConfigError, match='epochs'):
        train_config(RunConfig(epochs=0))
    assert train_config(RunConfig(augment=False, seed=4)).seed == 4
