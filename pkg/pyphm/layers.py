# -*- coding: utf-8 -*-
"""
Trainable layers: real, quaternion and vectormap 2D convolutions, dense
and PHM dense layers, and batch normalization, plus weight initialization.

Hypercomplex layers split their C channels into N contiguous groups
(group g holds channels g*C/N up to (g+1)*C/N) and share N small kernels
between all N x N group pairs. The full real kernel is assembled as a sum
of Kronecker products, so each layer runs as one real conv2d or matmul.

A hypercomplex layer of any kind is built with make_conv:
    conv = make_conv('quaternion', 8, 16, ConvSpec.same(3), name='conv1')
    y = conv(x)
"""
import zlib
from dataclasses import dataclass

import numpy as np

from . import ops
from .algebra import build_L_matrix, build_phm_sign_matrices
from .errors import ConfigError, DivisibilityError, ShapeError
from .tensor import Tensor, ConvSpec, as_tensor

ALGEBRAS = ('real', 'quaternion', 'vectormap')


class Parameter(Tensor):
    """
    A trainable tensor. role decides how init_weights fills it, fan_in is
    the effective fan-in used for the variance, and decay says whether
    weight decay applies.
    """
    def __init__(self, shape, role='kernel', fan_in=1, decay=True, name=None):
        super().__init__(np.zeros(shape), requires_grad=True, name=name)
        self.role = role
        self.fan_in = fan_in
        self.decay = decay


@dataclass
class LayerRecord:
    """One row of a layer trace: output shape, parameters and MACs"""
    name: str
    kind: str
    output_shape: tuple
    params: int
    macs: int


class Layer():
    """
    Base class. Parameters and child layers are found among the instance
    attributes in assignment order, which gives every parameter a stable
    dotted name such as 'stage1.block0.conv1.r'.
    """
    def __init__(self, name=None):
        self.name = name
        self.training = True

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def children(self):
        for attr, value in vars(self).items():
            if isinstance(value, Layer):
                yield attr, value

    def named_parameters(self, prefix=''):
        for attr, value in vars(self).items():
            path = attr if not prefix else prefix + '.' + attr
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Layer):
                yield from value.named_parameters(path)

    def parameters(self):
        return [param for _, param in self.named_parameters()]

    def named_buffers(self, prefix=''):
        for attr, value in self.children():
            path = attr if not prefix else prefix + '.' + attr
            yield from value.named_buffers(path)

    def count_params(self):
        return int(sum(param.size for param in self.parameters()))

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None

    def train(self):
        self.training = True
        for _, child in self.children():
            child.train()
        return self

    def eval(self):
        self.training = False
        for _, child in self.children():
            child.eval()
        return self

    # shape tracing for parameter and MAC budgets
    def output_shape(self, shape):
        return shape

    def macs(self, shape):
        return 0

    def trace(self, shape, prefix=''):
        """(output shape, [LayerRecord]) for a single input of shape"""
        out = self.output_shape(shape)
        record = LayerRecord(prefix, type(self).__name__, out,
                             self.count_params(), self.macs(shape))
        return out, [record]


#%% initialization
@dataclass
class InitSpec:
    """
    Weight initialization. Kernels draw from a normal with variance
    gain / fan_in where fan_in counts the N-fold kernel reuse
    (N * C/N * kH * kW = C * kH * kW). PHM blocks and dense weights use
    variance 1 / d. Every parameter gets its own generator seeded from
    (seed, crc32 of its name), so equal names get equal values whatever
    else the model holds.
    """
    scheme: str = 'he_normal'
    seed: int = 0
    gain: float = 2.

    def __post_init__(self):
        if self.scheme not in ('he_normal', 'zeros'):
            raise ConfigError("expected 'he_normal' or 'zeros', got %r"
                              % self.scheme, field='scheme')

    def rng(self, name):
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])


def init_parameter(param, name, spec):
    role = param.role
    if role in ('bias', 'beta'):
        values = np.zeros(param.shape)
    elif role == 'gamma':
        values = np.ones(param.shape)
    elif role == 'lmatrix':
        values = build_L_matrix(param.shape[0]).entries
    elif role == 'signs':
        values = build_phm_sign_matrices(param.shape[0]).matrices
    elif spec.scheme == 'zeros':
        values = np.zeros(param.shape)
    else:
        gain = spec.gain if role == 'kernel' else 1.
        std = np.sqrt(gain / param.fan_in)
        values = spec.rng(name).normal(0., std, size=param.shape)
    param.data[...] = values


def init_weights(layer, spec=None):
    """(Re)initialize every parameter of layer in place; returns layer"""
    if spec is None:
        spec = InitSpec()
    for name, param in layer.named_parameters(layer.name or ''):
        init_parameter(param, name, spec)
    return layer


def check_divisible(where, width, dim, remedy=None):
    if width % dim != 0:
        raise DivisibilityError(where, width, dim, remedy)


#%% functional forms
def quaternion_kernel(r, x, y, z):
    """
    Full [O, C, kH, kW] real kernel of a quaternion convolution from the
    four [O/4, C/4, kH, kW] component kernels
    """
    signs = build_phm_sign_matrices(4)
    kernels = ops.stack([r, x, y, z])
    return ops.kron_sum(as_tensor(signs.matrices, like=r), kernels)


def quaternion_conv2d(x, kernels, spec, where='quaternion_conv2d'):
    """
    Quaternion convolution. kernels is (R, X, Y, Z); input channel groups
    are (r, x, y, z) and the output groups are

        r' = R*r - X*x - Y*y - Z*z
        x' = X*r + R*x - Z*y + Y*z
        y' = Y*r + Z*x + R*y - X*z
        z' = Z*r - Y*x + X*y + R*z

    with * a real conv2d, evaluated as one conv2d with the assembled kernel.
    """
    check_divisible(where, x.shape[1], 4)
    weight = quaternion_kernel(*kernels)
    if weight.shape[1] != x.shape[1]:
        raise ShapeError('%s: kernel and input channel counts differ' % where,
                         x.shape, weight.shape)
    return ops.conv2d(x, weight, spec)


def placement_matrices(dim):
    """P_t[i, (i + t) mod dim] = 1: where kernel t sits in row i"""
    index = np.arange(dim)
    places = np.zeros((dim, dim, dim))
    for t in range(dim):
        places[t, index, (index + t) % dim] = 1.
    return places


def vectormap_kernel(kernels, lmatrix):
    """
    Full real kernel of a vectormap convolution: block (i, j) is
    L[i, j] * K_t with t = (j - i) mod D, so row i of the kernel
    arrangement is the i-fold circular shift of (K_0, ..., K_{D-1})
    """
    dim = len(kernels)
    places = as_tensor(placement_matrices(dim), like=lmatrix)
    return ops.kron_sum(ops.mul(places, lmatrix), ops.stack(kernels))


def vectormap_conv2d(x, kernels, lmatrix, spec, where='vectormap_conv2d'):
    """Output group i = sum_j L[i, j] conv2d(g_j, K_{(j - i) mod D})"""
    dim = len(kernels)
    if lmatrix.shape != (dim, dim):
        raise ShapeError('%s: L must be %d x %d' % (where, dim, dim),
                         lmatrix.shape)
    check_divisible(where, x.shape[1], dim)
    weight = vectormap_kernel(kernels, lmatrix)
    if weight.shape[1] != x.shape[1]:
        raise ShapeError('%s: kernel and input channel counts differ' % where,
                         x.shape, weight.shape)
    return ops.conv2d(x, weight, spec)


def phm_weight(signs, blocks):
    """H = sum_t A_t (x) S_t from [n, n, n] signs and [n, k/n, d/n] blocks"""
    return ops.kron_sum(as_tensor(signs, like=blocks), blocks)


def phm_linear(x, signs, blocks, bias=None):
    """y = H x + b row by row"""
    return ops.linear(x, phm_weight(signs, blocks), bias)


#%% convolutions
class Conv2d(Layer):
    """Real-valued convolution, no bias (batch norm follows every conv)"""
    def __init__(self, in_channels, out_channels, spec=None, name=None,
                 init=None):
        super().__init__(name)
        self.spec = ConvSpec.same(3) if spec is None else spec
        k = self.spec.kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = Parameter((out_channels, in_channels, k, k),
                                fan_in=in_channels * k * k)
        init_weights(self, init)

    def forward(self, x):
        return ops.conv2d(x, self.weight, self.spec)

    def output_shape(self, shape):
        c, h, w = shape
        return (self.out_channels, self.spec.output_extent(h),
                self.spec.output_extent(w))

    def macs(self, shape):
        _, h, w = self.output_shape(shape)
        return self.out_channels * self.in_channels * self.spec.kernel**2 * h * w


class QuaternionConv2d(Conv2d):
    """Quaternion convolution; four kernels shared across 16 group pairs"""
    def __init__(self, in_channels, out_channels, spec=None, name=None,
                 init=None):
        Layer.__init__(self, name)
        where = name or 'QuaternionConv2d'
        check_divisible(where + ' (input channels)', in_channels, 4)
        check_divisible(where + ' (output channels)', out_channels, 4)
        self.spec = ConvSpec.same(3) if spec is None else spec
        k = self.spec.kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        shape = (out_channels // 4, in_channels // 4, k, k)
        fan_in = in_channels * k * k
        self.r = Parameter(shape, fan_in=fan_in)
        self.x = Parameter(shape, fan_in=fan_in)
        self.y = Parameter(shape, fan_in=fan_in)
        self.z = Parameter(shape, fan_in=fan_in)
        init_weights(self, init)

    def forward(self, x):
        return quaternion_conv2d(x, (self.r, self.x, self.y, self.z),
                                 self.spec, where=self.name or
                                 'QuaternionConv2d')


class VectormapConv2d(Conv2d):
    """
    Vectormap convolution of dimension dim: dim kernels arranged
    circularly and mixed by the learnable L matrix
    """
    def __init__(self, in_channels, out_channels, dim=3, spec=None,
                 name=None, init=None):
        Layer.__init__(self, name)
        where = name or 'VectormapConv2d'
        if dim < 1:
            raise ConfigError('must be at least 1', field='dim')
        check_divisible(where + ' (input channels)', in_channels, dim)
        check_divisible(where + ' (output channels)', out_channels, dim)
        self.spec = ConvSpec.same(3) if spec is None else spec
        self.dim = dim
        k = self.spec.kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        shape = (out_channels // dim, in_channels // dim, k, k)
        for t in range(dim):
            setattr(self, 'k%d' % t, Parameter(shape,
                                               fan_in=in_channels * k * k))
        self.l = Parameter((dim, dim), role='lmatrix', decay=False)
        init_weights(self, init)

    @property
    def kernels(self):
        return [getattr(self, 'k%d' % t) for t in range(self.dim)]

    def forward(self, x):
        return vectormap_conv2d(x, self.kernels, self.l, self.spec,
                                where=self.name or 'VectormapConv2d')


def algebra_multiple(algebra, dim=3):
    """Channel multiple the algebra needs: 1, 4 or dim"""
    if algebra == 'real':
        return 1
    if algebra == 'quaternion':
        return 4
    if algebra == 'vectormap':
        return dim
    raise ConfigError('expected one of %s, got %r' % (ALGEBRAS, algebra),
                      field='algebra')


def make_conv(algebra, in_channels, out_channels, spec=None, dim=3,
              name=None, init=None):
    """Convolution of the requested algebra"""
    if algebra == 'real':
        return Conv2d(in_channels, out_channels, spec, name, init)
    if algebra == 'quaternion':
        return QuaternionConv2d(in_channels, out_channels, spec, name, init)
    if algebra == 'vectormap':
        return VectormapConv2d(in_channels, out_channels, dim, spec, name,
                               init)
    raise ConfigError('expected one of %s, got %r' % (ALGEBRAS, algebra),
                      field='algebra')


#%% dense layers
class Linear(Layer):
    """y = W x + b"""
    def __init__(self, in_features, out_features, name=None, init=None):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter((out_features, in_features), role='dense',
                                fan_in=in_features)
        self.bias = Parameter((out_features,), role='bias')
        init_weights(self, init)

    def forward(self, x):
        return ops.linear(x, self.weight, self.bias)

    def output_shape(self, shape):
        return (self.out_features,)

    def macs(self, shape):
        return self.in_features * self.out_features


class PHMLinear(Linear):
    """
    PHM dense layer y = H x + b with H = sum_t A_t (x) S_t. The blocks
    S_t are one parameter stacked as [n, k/n, d/n]. The structure matrices
    A_t are constants unless trainable_signs is set.
    """
    def __init__(self, in_features, out_features, n=4, trainable_signs=False,
                 name=None, init=None):
        Layer.__init__(self, name)
        where = name or 'PHMLinear'
        remedy = 'choose N dividing both d and k'
        check_divisible(where + ' (d)', in_features, n, remedy)
        check_divisible(where + ' (k)', out_features, n, remedy)
        self.in_features = in_features
        self.out_features = out_features
        self.n = n
        self.structure = build_phm_sign_matrices(n)
        self.blocks = Parameter((n, out_features // n, in_features // n),
                                role='block', fan_in=in_features)
        self.bias = Parameter((out_features,), role='bias')
        if trainable_signs:
            self.signs = Parameter((n, n, n), role='signs', decay=False)
        init_weights(self, init)

    @property
    def trainable_signs(self):
        return isinstance(getattr(self, 'signs', None), Parameter)

    def sign_tensor(self):
        if self.trainable_signs:
            return self.signs
        return as_tensor(self.structure.matrices, like=self.blocks)

    def weight_matrix(self):
        return phm_weight(self.sign_tensor(), self.blocks)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError('%s expects [batch, %d]'
                             % (self.name or 'PHMLinear', self.in_features),
                             x.shape)
        return phm_linear(x, self.sign_tensor(), self.blocks, self.bias)


#%% normalization
class BatchNorm2d(Layer):
    """
    Per-channel batch normalization with learnable gamma and beta. Running
    statistics are buffers, saved with checkpoints but never trained.
    """
    def __init__(self, channels, momentum=0.1, eps=1e-5, name=None):
        super().__init__(name)
        self.channels = channels
        self.gamma = Parameter((channels,), role='gamma', decay=False)
        self.beta = Parameter((channels,), role='beta', decay=False)
        self.stats = ops.BatchNormStats(momentum=momentum, eps=eps)
        init_weights(self)

    def forward(self, x):
        mode = 'train' if self.training else 'eval'
        return ops.batch_norm_forward(x, self.gamma, self.beta, self.stats,
                                      mode=mode)

    def named_buffers(self, prefix=''):
        yield prefix, self.stats
