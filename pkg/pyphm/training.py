# -*- coding: utf-8 -*-
"""
Training: SGD with Nesterov momentum and L2 weight decay, a linear warmup
followed by cosine (or linear) decay of the learning rate, softmax
cross-entropy and top-1 accuracy.

Defaults reproduce the usual CIFAR recipe: 120 epochs, batch 100,
learning rate 0.1 reached after 10 warmup epochs, momentum 0.9 and weight
decay 1e-4. Batch-norm gamma and beta and vectormap L matrices are never
decayed.

A run directory receives
    metrics.jsonl   one record per epoch, deterministic fields only
    timing.jsonl    wall time per epoch
    best.npz        checkpoint with the best validation top-1
    last.npz        checkpoint at the end of the latest finished epoch
    final.npz       checkpoint after the last epoch
"""
import json
import math
import os
import time
from dataclasses import dataclass, field, asdict, replace

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import structlog
from uncertainties import ufloat

from . import ops, styles
from .autodiff import backward
from .data import channel_stats, iterate_batches, AugmentSpec
from .errors import ConfigError, DivergenceError, NonFiniteError
from .models import build_model, save_checkpoint, load_checkpoint
from .tensor import Tensor, no_grad

log = structlog.get_logger()

SCHEDULES = ('cosine', 'linear')


@dataclass
class TrainConfig:
    """
    Optimizer, schedule and loop settings. warmup=None resolves to
    min(10, epochs // 12), which is 10 for the default 120 epochs.
    """
    epochs: int = 120
    batch: int = 100
    lr: float = 0.1
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 1e-4
    warmup: int = None
    schedule: str = 'cosine'
    seed: int = 0
    eval_every: int = 1
    augment: bool = True
    deterministic: bool = True

    @property
    def warmup_epochs(self):
        if self.warmup is None:
            return min(10, self.epochs // 12)
        return self.warmup

    def validate(self):
        if self.epochs < 1:
            raise ConfigError('must be at least 1', field='epochs')
        if self.batch < 1:
            raise ConfigError('must be at least 1', field='batch')
        if self.lr < 0:
            raise ConfigError('must be non-negative', field='lr')
        if not 0. <= self.momentum < 1.:
            raise ConfigError('must lie in [0, 1)', field='momentum')
        if self.weight_decay < 0:
            raise ConfigError('must be non-negative', field='weight_decay')
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ConfigError('warmup (%d) must be shorter than the run (%d '
                              'epochs)' % (self.warmup_epochs, self.epochs),
                              field='warmup')
        if self.schedule not in SCHEDULES:
            raise ConfigError('expected one of %s, got %r'
                              % (SCHEDULES, self.schedule), field='schedule')
        if self.eval_every < 1:
            raise ConfigError('must be at least 1', field='eval_every')
        return self


def lr_at(epoch, cfg):
    """
    Learning rate of a 1-based epoch. Warmup ramps linearly from lr/10 at
    epoch 1 to lr at the last warmup epoch; afterwards the rate decays to 0
    at the final epoch along a half cosine or a straight line.
    """
    if not 1 <= epoch <= cfg.epochs:
        raise ConfigError('epoch %d outside 1..%d' % (epoch, cfg.epochs),
                          field='epoch')
    base = cfg.lr
    warmup = cfg.warmup_epochs
    if epoch <= warmup:
        if warmup == 1:
            return base
        return base/10. + (base - base/10.) * (epoch - 1) / (warmup - 1)
    progress = (epoch - warmup) / (cfg.epochs - warmup)
    if cfg.schedule == 'linear':
        return base * (1. - progress)
    return base * 0.5 * (1. + math.cos(math.pi * progress))


#%% optimizer
def sgd_nesterov_step(params, grads, state, lr, cfg):
    """
    One SGD step in place. params maps names to Parameters, grads names to
    gradient arrays, state names to momentum buffers (filled on first use).

        g' = g + weight_decay * theta     (decayed parameters only)
        v  = momentum * v + g'
        theta -= lr * (g' + momentum * v)  (Nesterov)
        theta -= lr * v                    (heavy ball)
    """
    mu = cfg.momentum
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(name)
        if cfg.weight_decay and getattr(param, 'decay', True):
            grad = grad + cfg.weight_decay * param.data
        velocity = state.get(name)
        if velocity is None:
            velocity = np.zeros_like(param.data)
        velocity = mu * velocity + grad
        state[name] = velocity
        if cfg.nesterov:
            update = grad + mu * velocity
        else:
            update = velocity
        param.data -= (lr * update).astype(param.data.dtype)
    return params, state


class SGD():
    """Holds momentum buffers for the parameters of one model"""
    def __init__(self, named_params, cfg):
        self.params = dict(named_params)
        self.cfg = cfg
        self.state = {}

    def step(self, lr):
        grads = {name: p.grad for name, p in self.params.items()
                 if p.grad is not None}
        sgd_nesterov_step(self.params, grads, self.state, lr, self.cfg)

    def zero_grad(self):
        for param in self.params.values():
            param.grad = None


def parameter_groups(model):
    """Names of parameters with and without weight decay"""
    groups = {'decay': [], 'no_decay': []}
    for name, param in model.named_parameters():
        groups['decay' if param.decay else 'no_decay'].append(name)
    return groups


#%% loop
@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_top1: float
    val_loss: float = None
    val_top1: float = None
    lr: float = 0.
    wall_time: float = 0.

    def record(self):
        """The deterministic fields, as written to metrics.jsonl"""
        values = asdict(self)
        del values['wall_time']
        return values


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_val_top1: float = None
    best_checkpoint: str = None
    final_checkpoint: str = None

    @property
    def final(self):
        return self.history[-1] if self.history else None


def evaluate(model, split, batch, mean=None, std=None):
    """(mean loss, top-1 %) of model in its current mode over split"""
    total_loss = 0.
    correct = 0.
    with no_grad():
        for images, labels in iterate_batches(split, batch, train=False,
                                              mean=mean, std=std):
            logits = model(Tensor(images))
            loss = ops.cross_entropy(logits, labels)
            total_loss += loss.item() * len(labels)
            correct += ops.top1(logits, labels) * len(labels) / 100.
    return total_loss / len(split), 100. * correct / len(split)


def append_jsonl(path, record):
    with open(path, 'a') as fh:
        fh.write(json.dumps(record, sort_keys=True) + '\n')


def train(model, train_split, val_split, cfg, run_dir=None, stats=None,
          printout=False):
    """
    Train model in place and return a TrainResult. stats is the
    (mean, std) pair used for standardization; by default it is computed
    from train_split.

    A non-finite loss or gradient restores the last finished epoch's
    checkpoint (when a run directory is in use) and raises DivergenceError.
    """
    cfg.validate()
    classes = model.spec.classes
    if train_split.classes != classes or val_split.classes != classes:
        raise ConfigError('model has %d classes, data has %d/%d' % (
            classes, train_split.classes, val_split.classes), field='classes')
    mean, std = channel_stats(train_split) if stats is None else stats
    augment = AugmentSpec(enabled=cfg.augment)

    paths = {}
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        for name in ('metrics', 'timing'):
            paths[name] = os.path.join(run_dir, name + '.jsonl')
            open(paths[name], 'w').close()
        for name in ('best', 'last', 'final'):
            paths[name] = os.path.join(run_dir, name + '.npz')
        save_checkpoint(model, paths['last'])

    optimizer = SGD(model.named_parameters(), cfg)
    result = TrainResult()
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        lr = lr_at(epoch, cfg)
        model.train()
        total_loss = 0.
        correct = 0.
        for images, labels in iterate_batches(train_split, cfg.batch,
                                              epoch=epoch, seed=cfg.seed,
                                              spec=augment, mean=mean,
                                              std=std):
            optimizer.zero_grad()
            logits = model(Tensor(images))
            loss = ops.cross_entropy(logits, labels)
            try:
                if not np.isfinite(loss.item()):
                    raise NonFiniteError('loss', what='value')
                backward(loss)
                optimizer.step(lr)
            except NonFiniteError as err:
                checkpoint = paths.get('last')
                if checkpoint is not None:
                    load_checkpoint(checkpoint, model)
                log.error('training diverged', epoch=epoch, where=err.path,
                          checkpoint=checkpoint)
                raise DivergenceError(epoch, checkpoint) from err
            total_loss += loss.item() * len(labels)
            correct += ops.top1(logits, labels) * len(labels) / 100.

        metrics = EpochMetrics(epoch=epoch,
                               train_loss=total_loss / len(train_split),
                               train_top1=100. * correct / len(train_split),
                               lr=lr)
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            model.eval()
            metrics.val_loss, metrics.val_top1 = evaluate(
                model, val_split, cfg.batch, mean, std)
            model.train()
            if (result.best_val_top1 is None or
                    metrics.val_top1 > result.best_val_top1):
                result.best_val_top1 = metrics.val_top1
                if run_dir is not None:
                    result.best_checkpoint = save_checkpoint(model,
                                                             paths['best'])
        metrics.wall_time = time.perf_counter() - started
        result.history.append(metrics)

        if run_dir is not None:
            save_checkpoint(model, paths['last'])
            append_jsonl(paths['metrics'], metrics.record())
            append_jsonl(paths['timing'], {'epoch': epoch,
                                           'wall_time': metrics.wall_time})
        log.info('epoch finished', **metrics.record())
        if printout is True:
            print('epoch %3d  lr %.4f  train loss %.4f top-1 %5.1f%%  val '
                  'top-1 %s' % (epoch, lr, metrics.train_loss,
                                metrics.train_top1,
                                '-' if metrics.val_top1 is None else
                                '%5.1f%%' % metrics.val_top1))

    if run_dir is not None:
        result.final_checkpoint = save_checkpoint(model, paths['final'])
    return result


#%% several seeds, reading and plotting runs
@dataclass
class SeedSummary:
    """Best and mean +/- std of the final validation top-1 over seeds"""
    seeds: tuple
    val_top1: tuple

    @property
    def best(self):
        return max(self.val_top1)

    @property
    def spread(self):
        return ufloat(float(np.mean(self.val_top1)),
                      float(np.std(self.val_top1)))


def train_seeds(spec, train_split, val_split, cfg, seeds=(0, 1, 2),
                run_dir=None, printout=False):
    """
    Train one fresh model per seed (model initialization and data order
    both follow the seed) and summarize the best validation top-1 of each
    """
    scores = []
    for seed in seeds:
        model = build_model(replace(spec, seed=seed))
        seed_dir = None if run_dir is None else os.path.join(run_dir,
                                                             'seed%d' % seed)
        result = train(model, train_split, val_split, replace(cfg, seed=seed),
                       seed_dir)
        scores.append(result.best_val_top1)
    summary = SeedSummary(tuple(seeds), tuple(scores))
    log.info('seeds finished', seeds=list(seeds), best=summary.best,
             mean=summary.spread.nominal_value, std=summary.spread.std_dev)
    if printout is True:
        print('val top-1 over %d seeds: best %.2f%%, mean %s'
              % (len(seeds), summary.best, summary.spread))
    return summary


def read_metrics(run_dir):
    """metrics.jsonl of a run as a DataFrame indexed by epoch"""
    frame = pd.read_json(os.path.join(run_dir, 'metrics.jsonl'), lines=True)
    return frame.set_index('epoch')


def plot_history(history, show_plot=False, title=None):
    """
    Loss and top-1 curves from a run directory, a DataFrame from
    read_metrics or a list of EpochMetrics. Returns the figure.
    """
    if isinstance(history, str):
        frame = read_metrics(history)
    elif isinstance(history, pd.DataFrame):
        frame = history
    else:
        frame = pd.DataFrame([m.record() for m in history]).set_index('epoch')
    if show_plot is False:
        styles.use_headless_backend()
    fig, ax_loss, ax_top1 = styles.plot_history_outline(title=title)
    ax_loss.plot(frame.index, frame['train_loss'], **styles.style_train)
    ax_top1.plot(frame.index, frame['train_top1'], **styles.style_train)
    val = frame.dropna(subset=['val_top1'])
    if len(val):
        ax_loss.plot(val.index, val['val_loss'], **styles.style_val)
        ax_top1.plot(val.index, val['val_top1'], **styles.style_val)
    ax_top1.legend(loc='lower right')
    if show_plot is True:
        plt.show()
    return fig
