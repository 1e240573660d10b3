# -*- coding: utf-8 -*-
"""
Run configuration shared by every pyphm subcommand.

A config file is a flat JSON object whose keys are RunConfig fields, e.g.
    {"arch": "qphm18", "dataset": "synthetic", "epochs": 2, "lr": 0.05}
Keys left out keep their defaults. Values are resolved as
defaults < config file < command-line flags, and the resolved config is
echoed (and written to <run_dir>/config.json) with sorted keys, so loading
an echoed file and dumping it again gives the same bytes.
"""
import json
import os
from dataclasses import dataclass, asdict, fields, replace

from .errors import ConfigError
from .models import preset
from .training import TrainConfig

DATA_ROOT_VARIABLE = 'PYPHM_DATA_ROOT'
DATASETS = ('cifar10', 'cifar100', 'synthetic')


@dataclass
class RunConfig:
    command: str = 'train'
    # architecture
    arch: str = 'qphm18'
    classes: int = 100
    widen: int = 1
    width_divisor: int = 1
    phm_n: int = None
    vectormap_dim: int = 3
    stem: str = 'cifar'
    trainable_signs: bool = False
    # data
    dataset: str = 'cifar100'
    data_root: str = None
    synthetic_per_class: int = 20
    synthetic_size: int = 32
    augment: bool = True
    # training
    epochs: int = 120
    batch: int = 100
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    warmup: int = None
    schedule: str = 'cosine'
    eval_every: int = 1
    seed: int = 0
    deterministic: bool = True
    run_dir: str = None
    # analysis and checks
    compare: int = None
    reps: int = 0
    eps: float = 1e-5
    threshold: float = 1e-5
    menu: str = 'phm,quatconv,vectconv,block'

    @classmethod
    def from_dict(cls, values, source='config'):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError('unknown keys %s in %s' % (unknown, source),
                              field=unknown[0])
        for f in fields(cls):
            if f.name in values:
                check_type(f, values[f.name], source)
        return cls(**values)

    def updated(self, values):
        """Copy with every value that is not None replaced"""
        given = {key: value for key, value in values.items()
                 if value is not None}
        RunConfig.from_dict(given, 'flags')
        return replace(self, **given)

    def dumps(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2) + '\n'

    @property
    def menu_entries(self):
        return tuple(entry.strip() for entry in self.menu.split(',')
                     if entry.strip())

    def validate(self):
        if self.dataset not in DATASETS:
            raise ConfigError('expected one of %s, got %r'
                              % (DATASETS, self.dataset), field='dataset')
        if self.synthetic_per_class < 1:
            raise ConfigError('must be at least 1',
                              field='synthetic_per_class')
        if self.reps < 0:
            raise ConfigError('must be non-negative', field='reps')
        if self.threshold <= 0:
            raise ConfigError('must be positive', field='threshold')
        return self


def check_type(f, value, source):
    """value must suit the field type; ints pass as floats, None only where
    the default is None"""
    if value is None:
        if f.default is None:
            return
    elif f.type is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return
    elif f.type is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return
    elif isinstance(value, f.type):
        return
    raise ConfigError('expected %s in %s, got %r'
                      % (f.type.__name__, source, value), field=f.name)


def load_config(path):
    """Values of a config file as a dict; keys are checked, not resolved"""
    try:
        with open(path) as fh:
            values = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError('%s is not valid JSON: %s' % (path, err),
                          field='config') from err
    except OSError as err:
        raise ConfigError('cannot read %s: %s' % (path, err),
                          field='config') from err
    if not isinstance(values, dict):
        raise ConfigError('%s must hold one flat JSON object' % path,
                          field='config')
    nested = [key for key, value in values.items()
              if isinstance(value, (dict, list))]
    if nested:
        raise ConfigError('values must be scalars; %s are not' % nested,
                          field=nested[0])
    RunConfig.from_dict(values, path)
    return values


def resolve_config(file=None, flags=None):
    """RunConfig from defaults, then the config file, then flags"""
    cfg = RunConfig()
    if file is not None:
        cfg = replace(cfg, **load_config(file))
    if flags:
        cfg = cfg.updated(flags)
    return cfg.validate()


def dump_config(cfg, path=None):
    text = cfg.dumps()
    if path is not None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w') as fh:
            fh.write(text)
    return text


def resolve_data_root(flag=None):
    """--data-root, then $PYPHM_DATA_ROOT, then ./data"""
    if flag:
        return flag
    return os.environ.get(DATA_ROOT_VARIABLE) or os.path.join('.', 'data')


def architecture(cfg):
    """ArchitectureSpec of the run, validated"""
    spec = preset(cfg.arch, classes=cfg.classes, widen=cfg.widen,
                  width_divisor=cfg.width_divisor, phm_n=cfg.phm_n,
                  vectormap_dim=cfg.vectormap_dim, stem=cfg.stem,
                  trainable_signs=cfg.trainable_signs, seed=cfg.seed,
                  input_size=cfg.synthetic_size if cfg.dataset == 'synthetic'
                  else 32)
    return spec.validate()


def train_config(cfg):
    return TrainConfig(epochs=cfg.epochs, batch=cfg.batch, lr=cfg.lr,
                       momentum=cfg.momentum,
                       weight_decay=cfg.weight_decay, warmup=cfg.warmup,
                       schedule=cfg.schedule, seed=cfg.seed,
                       eval_every=cfg.eval_every, augment=cfg.augment,
                       deterministic=cfg.deterministic).validate()
