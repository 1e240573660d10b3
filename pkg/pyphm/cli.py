# -*- coding: utf-8 -*-
"""
Command line entry point:
    pyphm train     --arch qphm18 --dataset synthetic --epochs 2
    pyphm verify
    pyphm analyze   --arch resnet18 --classes 100
    pyphm analyze   --compare 18
    pyphm gradcheck --eps 1e-5 --threshold 1e-5

Every subcommand prints its resolved configuration before acting. Exit
codes: 0 success, 1 verification failure, 2 configuration error,
3 training divergence.
"""
import argparse
import logging
import os
import sys

import structlog

from . import __version__
from .analysis import budget, compare_depth
from .analysis import referencevalues
from .config import (RunConfig, DATASETS, resolve_config, dump_config,
                     resolve_data_root, architecture, train_config)
from .data import load_cifar, make_synthetic, cached_stats, stats_path
from .errors import ConfigError, DivergenceError, PyphmError
from .models import build_model
from .tensor import set_deterministic
from .training import train
from .verify import algebra_suite, layer_suite, gradcheck_suite, MENU

log = structlog.get_logger()

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def configure_logging(verbose=False):
    """Key-value log lines on stderr; stdout is left to reports"""
    level = logging.DEBUG if verbose else logging.INFO
    structlog.configure(
        processors=[structlog.processors.add_log_level,
                    structlog.processors.TimeStamper(fmt='iso'),
                    structlog.dev.ConsoleRenderer(colors=False)],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False)


#%% subcommands
def load_splits(cfg):
    """(train, val, stats); stats is None where train computes its own"""
    if cfg.dataset == 'synthetic':
        splits = make_synthetic(classes=cfg.classes,
                                per_class=cfg.synthetic_per_class,
                                size=cfg.synthetic_size, seed=cfg.seed)
        return splits + (None,)
    root = resolve_data_root(cfg.data_root)
    try:
        splits = load_cifar(root, cfg.dataset)
    except FileNotFoundError as err:
        raise ConfigError('no %s files under %s (%s); set --data-root or %s'
                          % (cfg.dataset, root, err.filename,
                             'PYPHM_DATA_ROOT'), field='data_root') from err
    if splits[0].classes != cfg.classes:
        raise ConfigError('%s has %d classes, --classes is %d'
                          % (cfg.dataset, splits[0].classes, cfg.classes),
                          field='classes')
    stats = cached_stats(splits[0], stats_path(root, cfg.dataset))
    return splits + (stats,)


def cmd_train(cfg):
    spec = architecture(cfg)
    train_cfg = train_config(cfg)
    set_deterministic(cfg.deterministic)
    train_split, val_split, stats = load_splits(cfg)
    if cfg.run_dir is not None:
        dump_config(cfg, os.path.join(cfg.run_dir, 'config.json'))
    model = build_model(spec)
    try:
        result = train(model, train_split, val_split, train_cfg,
                       run_dir=cfg.run_dir, stats=stats, printout=True)
    except DivergenceError as err:
        print('diverged: %s' % err)
        return EXIT_DIVERGED
    print('best val top-1 %.2f%% (%s)' % (result.best_val_top1, spec.name))
    return EXIT_OK


def cmd_verify(cfg):
    reports = [algebra_suite(seed=cfg.seed, printout=True),
               layer_suite(seed=cfg.seed, printout=True)]
    failures = [result for report in reports for result in report.failures]
    if failures:
        print('%d checks failed:' % len(failures))
        for result in failures:
            print(result)
        return EXIT_FAILED
    return EXIT_OK


def cmd_analyze(cfg):
    if cfg.compare is not None:
        compare_depth(cfg.compare, classes=cfg.classes,
                      latency_reps=cfg.reps, printout=True)
        return EXIT_OK
    spec = architecture(cfg)
    report = budget(build_model(spec), latency_reps=cfg.reps, printout=True)
    if (referencevalues.lookup(spec.name) is not None and cfg.classes == 100
            and spec.widen == 1 and spec.width_divisor == 1):
        row = referencevalues.lookup(spec.name)
        verdict = referencevalues.within_tolerance(spec.name, report.params,
                                                   report.macs)
        print('  published   %.2fM params, %.2fG MACs; within tolerance: %s'
              % (row['params_m'], row['flops_g'],
                 ', '.join('%s %s' % item for item in verdict.items())))
    return EXIT_OK


def cmd_gradcheck(cfg):
    unknown = [entry for entry in cfg.menu_entries if entry not in MENU]
    if unknown:
        raise ConfigError('unknown entries %s; choose from %s'
                          % (unknown, ', '.join(sorted(MENU))), field='menu')
    report = gradcheck_suite(menu=cfg.menu_entries, eps=cfg.eps,
                             threshold=cfg.threshold, seed=cfg.seed,
                             printout=True)
    if not report.passed:
        worst = max(report.failures, key=lambda result: result.error)
        print('gradient check failed: %s, %s' % (worst.name, worst.detail))
        return EXIT_FAILED
    return EXIT_OK


COMMANDS = {'train': cmd_train, 'verify': cmd_verify,
            'analyze': cmd_analyze, 'gradcheck': cmd_gradcheck}


#%% argument parsing
def common_flags():
    """Flags every subcommand accepts; absent flags leave no attribute"""
    parser = argparse.ArgumentParser(add_help=False,
                                     argument_default=argparse.SUPPRESS)
    parser.add_argument('--config', help='flat JSON file of run settings')
    parser.add_argument('--verbose', action='store_true',
                        help='debug level logging')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--arch', help='preset name, e.g. qphm18 or vect50')
    parser.add_argument('--classes', type=int)
    parser.add_argument('--widen', type=int)
    parser.add_argument('--width-divisor', type=int,
                        help='divide stage widths, rounding up to the '
                        'algebra multiple')
    parser.add_argument('--phm-n', type=int,
                        help='PHM dimension of the backend (default: auto)')
    parser.add_argument('--vectormap-dim', type=int)
    parser.add_argument('--stem', choices=('cifar', 'imagenet'))
    parser.add_argument('--trainable-signs', action='store_true')
    parser.add_argument('--dataset', choices=DATASETS)
    parser.add_argument('--data-root',
                        help='CIFAR directory (default: $PYPHM_DATA_ROOT or '
                        './data)')
    parser.add_argument('--synthetic-per-class', type=int)
    parser.add_argument('--synthetic-size', type=int)
    parser.add_argument('--no-augment', dest='augment', action='store_false')
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--batch', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--momentum', type=float)
    parser.add_argument('--weight-decay', type=float)
    parser.add_argument('--warmup', type=int)
    parser.add_argument('--schedule', choices=('cosine', 'linear'))
    parser.add_argument('--eval-every', type=int)
    parser.add_argument('--deterministic',
                        action=argparse.BooleanOptionalAction)
    parser.add_argument('--run-dir')
    parser.add_argument('--compare', type=int, metavar='DEPTH',
                        help='table of every family at one depth')
    parser.add_argument('--reps', type=int,
                        help='timed forward passes for latency (0: skip)')
    parser.add_argument('--eps', type=float)
    parser.add_argument('--threshold', type=float)
    parser.add_argument('--menu',
                        help='comma separated gradcheck entries from %s'
                        % ', '.join(sorted(MENU)))
    return parser


def make_parser():
    parser = argparse.ArgumentParser(
        prog='pyphm', description='Hypercomplex ResNets: training, budgets '
        'and algebra checks')
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    subparsers = parser.add_subparsers(dest='command', required=True)
    parent = common_flags()
    helps = {'train': 'train a network',
             'verify': 'run the algebra and layer identity suites',
             'analyze': 'parameter, MAC and latency budgets',
             'gradcheck': 'finite difference gradient checks'}
    for name, text in helps.items():
        subparsers.add_parser(name, parents=[parent], help=text,
                              argument_default=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = vars(make_parser().parse_args(argv))
    command = args.pop('command')
    configure_logging(args.pop('verbose', False))
    config_file = args.pop('config', None)
    try:
        cfg = resolve_config(config_file, dict(args, command=command))
        print(dump_config(cfg), end='')
        return COMMANDS[command](cfg)
    except ConfigError as err:
        print('configuration error: %s' % err, file=sys.stderr)
        return EXIT_CONFIG
    except PyphmError as err:
        log.error('run failed', error=str(err))
        print('error: %s' % err, file=sys.stderr)
        return EXIT_FAILED


__all__ = ['main', 'configure_logging', 'RunConfig']
