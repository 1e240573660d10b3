# -*- coding: utf-8 -*-
"""
Reverse mode differentiation over the pyphm op set, plus finite difference
checks of the result.

Every differentiable op is a TapeNode subclass with a forward that works on
numpy arrays and a backward that maps the gradient of the output to the
gradients of each input. TapeNode.apply runs the forward and, when any
input wants a gradient and recording is on, links the output tensor to the
node. The links form a DAG that backward() walks once in reverse
topological order.

grad_check() compares backward() against central differences and returns
a GradReport. Run it in wide precision:
    with precision('wide'):
        report = grad_check(loss_fn, {'w': w}, eps=1e-5)
"""
from dataclasses import dataclass, field

import numpy as np
import structlog

from .errors import (ShapeError, UnsupportedOpError, NonFiniteError,
                     PrecisionError, ConfigError)
from .tensor import Tensor, grad_enabled, no_grad

log = structlog.get_logger()


class TapeNode():
    """
    One recorded op: its identity (op), references to its input tensors and
    whatever activations backward needs (saved).
    """
    op = 'op'

    def __init__(self, *inputs):
        self.inputs = inputs
        self.saved = {}

    def forward(self, *arrays, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise UnsupportedOpError('no derivative rule for op %r' % self.op)

    @classmethod
    def apply(cls, *inputs, **kwargs):
        node = cls(*inputs)
        out = node.forward(*(t.data for t in inputs), **kwargs)
        record = grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=record,
                      node=node if record else None, dtype=out.dtype)

    def __repr__(self):
        return '%s(%d inputs)' % (self.op, len(self.inputs))


def topological_order(root):
    """Tensors reachable from root, each one after all of its inputs"""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss):
    """
    Gradients of the scalar loss for every reachable leaf tensor that
    requires one. Each leaf's .grad is overwritten, not accumulated, and the
    {tensor: gradient} mapping is returned. The tape is left intact, so a
    second call on the same loss gives the same gradients.
    """
    if loss.size != 1:
        raise ShapeError('backward needs a scalar loss', loss.shape)
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for tensor in reversed(topological_order(loss)):
        grad = grads.pop(id(tensor), None)
        if grad is None:
            continue
        node = tensor.node
        if node is None:
            if tensor.requires_grad:
                leaves[tensor] = grad
            continue
        parent_grads = node.backward(grad)
        for parent, parent_grad in zip(node.inputs, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad
    for tensor, grad in leaves.items():
        tensor.grad = grad
    return leaves


#%% finite difference checks
@dataclass
class GradReport:
    """Per-parameter relative errors of a gradient check"""
    errors: dict = field(default_factory=dict)
    eps: float = 1e-5
    floor: float = 1e-8

    @property
    def max_error(self):
        if not self.errors:
            return 0.
        return max(self.errors.values())

    @property
    def worst(self):
        if not self.errors:
            return None
        return max(self.errors, key=self.errors.get)

    def passed(self, threshold):
        return self.max_error < threshold

    def summary(self):
        lines = ['gradient check, eps=%g' % self.eps]
        for name, error in self.errors.items():
            lines.append('  %-40s %.3e' % (name, error))
        lines.append('  max relative error %.3e (%s)'
                     % (self.max_error, self.worst))
        return '\n'.join(lines)


def relative_error(analytic, numeric, floor=1e-8):
    """
    max|analytic - numeric| over the whole gradient, divided by the largest
    magnitude either one reaches (never less than floor)
    """
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def grad_check(loss_fn, params, eps=1e-5, floor=1e-8, printout=False):
    """
    Compare backward() with central differences
    (f(theta+eps) - f(theta-eps)) / (2 eps) for every element of every
    parameter.

    loss_fn takes no arguments and returns a scalar Tensor. params is a
    dict of name -> Tensor; all of them must be in wide precision and eps
    must lie in [1e-6, 1e-4].
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ConfigError('must lie in [1e-6, 1e-4], got %g' % eps,
                          field='eps')
    for name, param in params.items():
        if param.dtype != np.float64:
            raise PrecisionError('gradient checks need wide precision; %s is '
                                 '%s' % (name, param.dtype))

    loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise NonFiniteError('loss', what='value')
    for param in params.values():
        param.grad = None
    backward(loss)

    report = GradReport(eps=eps, floor=floor)
    for name, param in params.items():
        analytic = param.grad
        if analytic is None:
            analytic = np.zeros_like(param.data)
        if not np.isfinite(analytic).all():
            raise NonFiniteError(name)

        numeric = np.zeros_like(param.data)
        flat = param.data.reshape(-1)
        with no_grad():
            for idx in range(flat.size):
                original = flat[idx]
                flat[idx] = original + eps
                plus = loss_fn().item()
                flat[idx] = original - eps
                minus = loss_fn().item()
                flat[idx] = original
                numeric.flat[idx] = (plus - minus) / (2. * eps)
        if not np.isfinite(numeric).all():
            raise NonFiniteError(name, what='numeric gradient')
        report.errors[name] = relative_error(analytic, numeric, floor)

    log.debug('gradient check', max_error=report.max_error,
              worst=report.worst, eps=eps)
    if printout is True:
        print(report.summary())
    return report
