# -*- coding: utf-8 -*-
"""
The dense tensor every other part of pyphm passes around.

A Tensor is a thin wrapper over a contiguous numpy array plus what reverse
mode differentiation needs: whether it wants a gradient, the gradient
itself once backward has run, and the tape node that produced it.

Two precisions are available. 'standard' (float32) is what training uses;
'wide' (float64) is for gradient checks and oracle comparisons, e.g.,
    with precision('wide'):
        x = Tensor(np.random.randn(2, 3))

ConvSpec carries stride, padding and kernel extent for 2D convolutions.
"""
import contextlib
import threading
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ConfigError

PRECISIONS = {'standard': np.float32, 'wide': np.float64}


@dataclass
class TensorSettings:
    precision: str = 'standard'
    deterministic: bool = True

    @property
    def dtype(self):
        return PRECISIONS[self.precision]


settings = TensorSettings()

# recording is per thread so every training thread owns its tape
_recording = threading.local()


def set_precision(name):
    """Switch the process-wide precision ('standard' or 'wide')"""
    if name not in PRECISIONS:
        raise ConfigError('expected one of %s, got %r'
                          % (sorted(PRECISIONS), name), field='precision')
    settings.precision = name


@contextlib.contextmanager
def precision(name):
    """Temporarily switch precision, restoring the old one afterwards"""
    old = settings.precision
    set_precision(name)
    try:
        yield settings
    finally:
        settings.precision = old


def set_deterministic(flag):
    """
    Fix the reduction order of every kernel. All kernels in pyphm run
    single-threaded over the batch axis, so this only records the request.
    """
    settings.deterministic = bool(flag)


def grad_enabled():
    return getattr(_recording, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    """Run forward passes without recording anything on the tape"""
    old = grad_enabled()
    _recording.enabled = False
    try:
        yield
    finally:
        _recording.enabled = old


class Tensor():
    """
    Dense N-dimensional real array with shape metadata.

    data is cast to the current precision unless dtype says otherwise.
    Every extent must be at least 1; scalars have shape ().
    """
    def __init__(self, data, requires_grad=False, name=None, node=None,
                 dtype=None):
        if dtype is None:
            dtype = settings.dtype
        self.data = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        if any(extent < 1 for extent in self.data.shape):
            raise ShapeError('tensor extents must all be at least 1',
                             self.data.shape)
        self.requires_grad = requires_grad
        self.name = name
        self.node = node
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ShapeError('item() needs a single-element tensor', self.shape)
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = '' if self.name is None else ' name=%s' % self.name
        return 'Tensor(shape=%s, dtype=%s%s)' % (self.shape, self.dtype, label)

    def __len__(self):
        return self.shape[0]

    # arithmetic routes through the differentiable ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.scale(as_tensor(other, like=self), -1.0))

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def as_tensor(value, like=None):
    """Wrap arrays and scalars; Tensors pass through unchanged"""
    if isinstance(value, Tensor):
        return value
    dtype = None if like is None else like.dtype
    return Tensor(value, dtype=dtype)


@dataclass(frozen=True)
class ConvSpec:
    """
    Stride, symmetric zero padding and square kernel extent of a 2D
    convolution. same(k) gives the padding that keeps spatial size at
    stride 1.
    """
    kernel: int = 3
    stride: int = 1
    padding: int = 1

    def __post_init__(self):
        if self.kernel < 1:
            raise ConfigError('must be positive', field='kernel')
        if self.stride < 1:
            raise ConfigError('must be positive', field='stride')
        if self.padding < 0:
            raise ConfigError('must be non-negative', field='padding')

    @classmethod
    def same(cls, kernel, stride=1):
        return cls(kernel=kernel, stride=stride, padding=(kernel - 1) // 2)

    def output_extent(self, extent):
        out = (extent + 2*self.padding - self.kernel) // self.stride + 1
        if out < 1:
            raise ShapeError('convolution leaves no output positions for '
                             'input extent %d with %s' % (extent, self))
        return out
