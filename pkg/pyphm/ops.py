# -*- coding: utf-8 -*-
"""
Differentiable numeric kernels on Tensors.

The real-valued workhorses are conv2d (cross-correlation through im2col
and a single matmul), matmul, global_avg_pool and batch_norm_forward.
Everything the hypercomplex layers and the ResNets need on top of those
(relu, max_pool2d, kron_sum, pad_channels, cross_entropy, ...) lives here
as well, each one a TapeNode with its derivative rule.

conv2d_direct and matmul_direct are the plain nested-loop versions kept as
oracles for the fast paths. They work on numpy arrays, not Tensors.
"""
import numpy as np
from scipy.special import logsumexp, softmax

from .autodiff import TapeNode
from .errors import ShapeError, UninitializedStatsError
from .tensor import Tensor, ConvSpec, as_tensor


def unbroadcast(grad, shape):
    """Sum grad down to shape, undoing numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


#%% elementwise and shape ops
class Add(TapeNode):
    op = 'add'

    def forward(self, a, b):
        self.saved['shapes'] = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        shape_a, shape_b = self.saved['shapes']
        return unbroadcast(grad, shape_a), unbroadcast(grad, shape_b)


class Mul(TapeNode):
    op = 'mul'

    def forward(self, a, b):
        self.saved['a'] = a
        self.saved['b'] = b
        return a * b

    def backward(self, grad):
        a = self.saved['a']
        b = self.saved['b']
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


class Scale(TapeNode):
    op = 'scale'

    def forward(self, a, factor=1.):
        self.saved['factor'] = factor
        return a * a.dtype.type(factor)

    def backward(self, grad):
        return (grad * grad.dtype.type(self.saved['factor']),)


class Sum(TapeNode):
    op = 'sum'

    def forward(self, a):
        self.saved['shape'] = a.shape
        return np.asarray(a.sum(), dtype=a.dtype)

    def backward(self, grad):
        return (np.broadcast_to(grad, self.saved['shape']).copy(),)


class Reshape(TapeNode):
    op = 'reshape'

    def forward(self, a, shape=None):
        self.saved['shape'] = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.saved['shape']),)


class Transpose(TapeNode):
    op = 'transpose'

    def forward(self, a):
        return a.T.copy()

    def backward(self, grad):
        return (grad.T.copy(),)


class ReLU(TapeNode):
    op = 'relu'

    def forward(self, a):
        mask = a > 0
        self.saved['mask'] = mask
        return np.where(mask, a, 0).astype(a.dtype)

    def backward(self, grad):
        # subgradient at 0 is 0
        return (grad * self.saved['mask'],)


class PadChannels(TapeNode):
    op = 'pad_channels'

    def forward(self, a, channels=None):
        self.saved['channels'] = a.shape[1]
        pad = [(0, 0)] * a.ndim
        pad[1] = (0, channels - a.shape[1])
        return np.pad(a, pad)

    def backward(self, grad):
        return (grad[:, :self.saved['channels']].copy(),)


def add(a, b):
    a = as_tensor(a)
    return Add.apply(a, as_tensor(b, like=a))


def mul(a, b):
    a = as_tensor(a)
    return Mul.apply(a, as_tensor(b, like=a))


def scale(a, factor):
    return Scale.apply(a, factor=factor)


def sum_all(a):
    return Sum.apply(a)


def reshape(a, shape):
    return Reshape.apply(a, shape=tuple(shape))


def flatten(a):
    """Collapse everything after the batch axis"""
    return reshape(a, (a.shape[0], -1))


def transpose(a):
    if a.ndim != 2:
        raise ShapeError('transpose expects a matrix', a.shape)
    return Transpose.apply(a)


def relu(a):
    return ReLU.apply(a)


def pad_channels(a, channels):
    """Zero-pad the channel axis of an [N, C, ...] tensor up to channels"""
    if channels < a.shape[1]:
        raise ShapeError('cannot pad %d channels down to %d'
                         % (a.shape[1], channels), a.shape)
    if channels == a.shape[1]:
        return a
    return PadChannels.apply(a, channels=channels)


class Stack(TapeNode):
    op = 'stack'

    def forward(self, *arrays):
        return np.stack(arrays)

    def backward(self, grad):
        return tuple(grad[t] for t in range(grad.shape[0]))


def stack(tensors):
    """Stack same-shaped tensors along a new leading axis"""
    shapes = [t.shape for t in tensors]
    if len(set(shapes)) != 1:
        raise ShapeError('stack needs tensors of one shape', *shapes)
    return Stack.apply(*tensors)


#%% matrix product
class MatMul(TapeNode):
    op = 'matmul'

    def forward(self, a, b):
        self.saved['a'] = a
        self.saved['b'] = b
        return a @ b

    def backward(self, grad):
        a = self.saved['a']
        b = self.saved['b']
        return grad @ b.T, a.T @ grad


def matmul(a, b):
    """[M, K] @ [K, N] -> [M, N]"""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError('matmul needs [M,K] @ [K,N]', a.shape, b.shape)
    return MatMul.apply(a, b)


def linear(x, weight, bias=None):
    """y = x W^T + b for x of shape [batch, d] and W of shape [k, d]"""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError('linear needs x [batch, d] and W [k, d]', x.shape,
                         weight.shape)
    y = matmul(x, transpose(weight))
    if bias is not None:
        y = add(y, bias)
    return y


def matmul_direct(a, b):
    """Triple loop matrix product; oracle for matmul"""
    a = np.asarray(a)
    b = np.asarray(b)
    m, inner = a.shape
    if b.shape[0] != inner:
        raise ShapeError('matmul needs [M,K] @ [K,N]', a.shape, b.shape)
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.result_type(a, b))
    for i in range(m):
        for j in range(n):
            acc = 0.
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


#%% convolution
def im2col(x, spec):
    """
    Unfold [N, C, H, W] into [N*H'*W', C*k*k] rows, one row per output
    position, zero padded by spec.padding
    """
    n, c, h, w = x.shape
    k, s, p = spec.kernel, spec.stride, spec.padding
    out_h = spec.output_extent(h)
    out_w = spec.output_extent(w)
    img = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    col = np.empty((n, c, k, k, out_h, out_w), dtype=x.dtype)
    for y in range(k):
        y_max = y + s*out_h
        for xx in range(k):
            x_max = xx + s*out_w
            col[:, :, y, xx] = img[:, :, y:y_max:s, xx:x_max:s]
    col = col.transpose(0, 4, 5, 1, 2, 3).reshape(n*out_h*out_w, -1)
    return col, out_h, out_w


def col2im(col, shape, spec, out_h, out_w):
    """Fold rows back onto the image, summing overlaps; inverse of im2col"""
    n, c, h, w = shape
    k, s, p = spec.kernel, spec.stride, spec.padding
    col = col.reshape(n, out_h, out_w, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2*p, w + 2*p), dtype=col.dtype)
    for y in range(k):
        y_max = y + s*out_h
        for xx in range(k):
            x_max = xx + s*out_w
            img[:, :, y:y_max:s, xx:x_max:s] += col[:, :, y, xx]
    return img[:, :, p:h + p, p:w + p]


class Conv2d(TapeNode):
    op = 'conv2d'

    def forward(self, x, kernel, spec=None):
        col, out_h, out_w = im2col(x, spec)
        weight = kernel.reshape(kernel.shape[0], -1)
        out = col @ weight.T
        self.saved.update(col=col, kernel=kernel, spec=spec, shape=x.shape,
                          out_hw=(out_h, out_w))
        n = x.shape[0]
        return out.reshape(n, out_h, out_w, -1).transpose(0, 3, 1, 2)

    def backward(self, grad):
        col = self.saved['col']
        kernel = self.saved['kernel']
        out_h, out_w = self.saved['out_hw']
        grad = grad.transpose(0, 2, 3, 1).reshape(-1, kernel.shape[0])
        grad_kernel = (grad.T @ col).reshape(kernel.shape)
        grad_col = grad @ kernel.reshape(kernel.shape[0], -1)
        grad_x = col2im(grad_col, self.saved['shape'], self.saved['spec'],
                        out_h, out_w)
        return grad_x, grad_kernel


def check_conv_shapes(x_shape, kernel_shape, spec):
    if len(x_shape) != 4 or len(kernel_shape) != 4:
        raise ShapeError('conv2d needs input [N,C,H,W] and kernel '
                         '[O,C,kH,kW]', x_shape, kernel_shape)
    if kernel_shape[1] != x_shape[1]:
        raise ShapeError('kernel channel count differs from input channel '
                         'count', x_shape, kernel_shape)
    if kernel_shape[2] != spec.kernel or kernel_shape[3] != spec.kernel:
        raise ShapeError('kernel extent differs from ConvSpec.kernel=%d'
                         % spec.kernel, x_shape, kernel_shape)
    spec.output_extent(x_shape[2])
    spec.output_extent(x_shape[3])


def conv2d(x, kernel, spec):
    """
    Cross-correlation of input [N, C, H, W] with kernel [O, C, kH, kW]
    (no kernel flip), symmetric zero padding. Returns [N, O, H', W'].
    """
    check_conv_shapes(x.shape, kernel.shape, spec)
    return Conv2d.apply(x, kernel, spec=spec)


def conv2d_direct(x, kernel, spec):
    """Seven nested loops; oracle for conv2d. Works on numpy arrays."""
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    check_conv_shapes(x.shape, kernel.shape, spec)
    n, c, h, w = x.shape
    o = kernel.shape[0]
    k, s, p = spec.kernel, spec.stride, spec.padding
    out_h = spec.output_extent(h)
    out_w = spec.output_extent(w)
    img = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, o, out_h, out_w), dtype=np.result_type(x, kernel))
    for b in range(n):
        for oc in range(o):
            for i in range(out_h):
                for j in range(out_w):
                    acc = 0.
                    for ic in range(c):
                        for u in range(k):
                            for v in range(k):
                                acc += (img[b, ic, i*s + u, j*s + v] *
                                        kernel[oc, ic, u, v])
                    out[b, oc, i, j] = acc
    return out


#%% pooling
class GlobalAvgPool(TapeNode):
    op = 'global_avg_pool'

    def forward(self, x):
        self.saved['shape'] = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        n, c, h, w = self.saved['shape']
        spread = grad[:, :, None, None] / grad.dtype.type(h * w)
        return (np.broadcast_to(spread, (n, c, h, w)).copy(),)


def global_avg_pool(x):
    """[N, C, H, W] -> [N, C], the mean of every H x W plane"""
    if x.ndim != 4:
        raise ShapeError('global_avg_pool needs [N,C,H,W]', x.shape)
    return GlobalAvgPool.apply(x)


class MaxPool2d(TapeNode):
    op = 'max_pool2d'

    def forward(self, x, spec=None):
        n, c, h, w = x.shape
        k, s, p = spec.kernel, spec.stride, spec.padding
        out_h = spec.output_extent(h)
        out_w = spec.output_extent(w)
        img = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)),
                     constant_values=-np.inf)
        windows = np.empty((k*k, n, c, out_h, out_w), dtype=x.dtype)
        for y in range(k):
            for xx in range(k):
                windows[y*k + xx] = img[:, :, y:y + s*out_h:s,
                                        xx:xx + s*out_w:s]
        choice = windows.argmax(axis=0)
        self.saved.update(choice=choice, spec=spec, shape=x.shape)
        return np.take_along_axis(windows, choice[None], axis=0)[0]

    def backward(self, grad):
        spec = self.saved['spec']
        choice = self.saved['choice']
        n, c, h, w = self.saved['shape']
        k, s, p = spec.kernel, spec.stride, spec.padding
        out_h, out_w = choice.shape[2:]
        img = np.zeros((n, c, h + 2*p, w + 2*p), dtype=grad.dtype)
        for y in range(k):
            for xx in range(k):
                img[:, :, y:y + s*out_h:s, xx:xx + s*out_w:s] += (
                    grad * (choice == y*k + xx))
        return (img[:, :, p:h + p, p:w + p],)


def max_pool2d(x, spec):
    if x.ndim != 4:
        raise ShapeError('max_pool2d needs [N,C,H,W]', x.shape)
    return MaxPool2d.apply(x, spec=spec)


#%% batch normalization
class BatchNormStats():
    """
    Running mean and variance of one batch norm layer. Both stay None until
    the first train-mode pass fills them from that batch; after that they
    follow an exponential moving average with weight momentum.
    """
    def __init__(self, momentum=0.1, eps=1e-5):
        self.momentum = momentum
        self.eps = eps
        self.mean = None
        self.var = None

    @property
    def initialized(self):
        return self.mean is not None and self.var is not None

    def update(self, mean, var_unbiased):
        if not self.initialized:
            self.mean = mean.copy()
            self.var = var_unbiased.copy()
            return
        m = self.momentum
        self.mean = (1. - m) * self.mean + m * mean
        self.var = (1. - m) * self.var + m * var_unbiased


class BatchNorm(TapeNode):
    op = 'batch_norm'

    def forward(self, x, gamma, beta, stats=None, training=True):
        axes = (0, 2, 3)
        if training:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            stats.update(mean, var * count / (count - 1))
        else:
            mean = stats.mean.astype(x.dtype)
            var = stats.var.astype(x.dtype)
        inv_std = 1. / np.sqrt(var + stats.eps)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self.saved.update(xhat=xhat, inv_std=inv_std, gamma=gamma,
                          training=training)
        return (gamma[None, :, None, None] * xhat +
                beta[None, :, None, None]).astype(x.dtype)

    def backward(self, grad):
        xhat = self.saved['xhat']
        inv_std = self.saved['inv_std'][None, :, None, None]
        gamma = self.saved['gamma'][None, :, None, None]
        axes = (0, 2, 3)
        grad_gamma = (grad * xhat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_xhat = grad * gamma
        if self.saved['training']:
            mean_g = grad_xhat.mean(axis=axes, keepdims=True)
            mean_gx = (grad_xhat * xhat).mean(axis=axes, keepdims=True)
            grad_x = inv_std * (grad_xhat - mean_g - xhat * mean_gx)
        else:
            grad_x = grad_xhat * inv_std
        return grad_x, grad_gamma, grad_beta


def batch_norm_forward(x, gamma, beta, stats, mode='train'):
    """
    Per-channel normalization of [N, C, H, W]. Train mode uses the batch
    statistics and updates stats; eval mode uses the running statistics in
    stats and refuses to run before they exist.
    """
    if x.ndim != 4:
        raise ShapeError('batch norm needs [N,C,H,W]', x.shape)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError('gamma and beta need one entry per channel', x.shape,
                         gamma.shape, beta.shape)
    if mode == 'train':
        if x.shape[0] * x.shape[2] * x.shape[3] < 2:
            raise ShapeError('train-mode batch norm needs at least two '
                             'values per channel', x.shape)
        training = True
    elif mode == 'eval':
        if not stats.initialized:
            raise UninitializedStatsError('eval-mode batch norm before any '
                                          'running statistics were recorded')
        training = False
    else:
        raise ValueError("mode must be 'train' or 'eval', got %r" % mode)
    return BatchNorm.apply(x, gamma, beta, stats=stats, training=training)


#%% Kronecker sums
class KronSum(TapeNode):
    op = 'kron_sum'

    def forward(self, a, s):
        t, n, _ = a.shape
        p, q = s.shape[1:3]
        rest = s.shape[3:]
        flat = s.reshape(t, p, q, -1)
        out = np.einsum('tij,tabr->iajbr', a, flat)
        self.saved.update(a=a, flat=flat, rest=rest)
        return out.reshape((n*p, n*q) + rest)

    def backward(self, grad):
        a = self.saved['a']
        flat = self.saved['flat']
        t, n, _ = a.shape
        _, p, q, r = flat.shape
        grad = grad.reshape(n, p, n, q, r)
        grad_a = np.einsum('iajbr,tabr->tij', grad, flat)
        grad_s = np.einsum('iajbr,tij->tabr', grad, a)
        return grad_a, grad_s.reshape((t, p, q) + self.saved['rest'])


def kron_sum(a, s):
    """
    sum_t a[t] (x) s[t] for a of shape [T, n, n] and s of shape
    [T, p, q, ...]. The Kronecker product acts on the first two axes of
    each s[t]; trailing axes (kernel extents) ride along, giving
    [n*p, n*q, ...].
    """
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ShapeError('kron_sum needs structure matrices [T, n, n]',
                         a.shape)
    if s.ndim < 3 or s.shape[0] != a.shape[0]:
        raise ShapeError('kron_sum needs one block per structure matrix',
                         a.shape, s.shape)
    return KronSum.apply(a, s)


#%% losses
class SoftmaxCrossEntropy(TapeNode):
    op = 'softmax_cross_entropy'

    def forward(self, logits, labels=None):
        n = logits.shape[0]
        rows = np.arange(n)
        loss = (logsumexp(logits, axis=1) - logits[rows, labels]).mean()
        self.saved.update(logits=logits, labels=labels)
        return np.asarray(loss, dtype=logits.dtype)

    def backward(self, grad):
        logits = self.saved['logits']
        labels = self.saved['labels']
        n = logits.shape[0]
        probs = softmax(logits, axis=1)
        probs[np.arange(n), labels] -= 1.
        return (probs * (grad / n),)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy of [N, K] logits against integer labels"""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError('cross_entropy needs logits [N,K] and labels [N]',
                         logits.shape, labels.shape)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError('labels must lie in [0, %d)' % logits.shape[1])
    return SoftmaxCrossEntropy.apply(logits, labels=labels)


def half_squared_norm(y):
    """0.5 * ||y||^2, the loss used by the linear-layer gradient checks"""
    return scale(sum_all(mul(y, y)), 0.5)


def top1(logits, labels):
    """Percentage of rows whose largest logit sits at the label"""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return 100. * float(np.mean(data.argmax(axis=1) == np.asarray(labels)))


__all__ = ['add', 'mul', 'scale', 'sum_all', 'reshape', 'flatten',
           'transpose', 'relu', 'pad_channels', 'stack', 'matmul', 'linear',
           'matmul_direct', 'conv2d', 'conv2d_direct', 'im2col', 'col2im',
           'global_avg_pool', 'max_pool2d', 'BatchNormStats',
           'batch_norm_forward', 'kron_sum', 'cross_entropy',
           'half_squared_norm', 'top1', 'ConvSpec']
