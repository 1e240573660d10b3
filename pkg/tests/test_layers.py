import numpy as np
import pytest

from pyphm import ops
from pyphm.algebra import (Quaternion, build_L_matrix,
                           build_phm_sign_matrices)
from pyphm.errors import ConfigError, DivisibilityError, ShapeError
from pyphm.layers import (Conv2d, QuaternionConv2d, VectormapConv2d, Linear,
                          PHMLinear, BatchNorm2d, InitSpec, init_weights,
                          make_conv, algebra_multiple)
from pyphm.tensor import Tensor, ConvSpec

POINTWISE = ConvSpec(kernel=1, stride=1, padding=0)


def test_quaternion_conv_single_pixel_is_hamilton_product(wide, rng):
    kernel = Quaternion.from_array(rng.normal(size=4))
    q = Quaternion.from_array(rng.normal(size=4))
    layer = QuaternionConv2d(4, 4, POINTWISE, name='q')
    for attr, value in zip('rxyz', kernel):
        getattr(layer, attr).data[...] = value
    out = layer(Tensor(q.as_array().reshape(1, 4, 1, 1))).data.reshape(4)
    np.testing.assert_allclose(out, (kernel * q).as_array(), atol=1e-12)


def test_quaternion_conv_real_part_only_acts_groupwise(wide, rng):
    layer = QuaternionConv2d(8, 8, ConvSpec.same(3), name='q')
    for attr in 'xyz':
        getattr(layer, attr).data[...] = 0.
    x = rng.normal(size=(2, 8, 5, 5))
    out = layer(Tensor(x)).data
    for g in range(4):
        group = slice(2 * g, 2 * g + 2)
        expected = ops.conv2d_direct(x[:, group], layer.r.data, layer.spec)
        np.testing.assert_allclose(out[:, group], expected, atol=1e-12)


def test_vectormap_conv_matches_group_sum(wide, rng):
    dim = 3
    layer = VectormapConv2d(6, 9, dim=dim, spec=ConvSpec.same(3), name='v')
    layer.l.data[...] = rng.normal(size=(dim, dim))
    x = rng.normal(size=(1, 6, 4, 4))
    out = layer(Tensor(x)).data
    groups = np.split(x, dim, axis=1)
    for i in range(dim):
        expected = sum(layer.l.data[i, j] *
                       ops.conv2d_direct(groups[j],
                                         layer.kernels[(j - i) % dim].data,
                                         layer.spec)
                       for j in range(dim))
        np.testing.assert_allclose(out[:, 3*i:3*i + 3], expected, atol=1e-12)


def test_vectormap_conv_with_identity_L(wide, rng):
    layer = VectormapConv2d(4, 4, dim=2, spec=ConvSpec.same(3), name='v')
    layer.l.data[...] = np.eye(2)
    x = rng.normal(size=(1, 4, 3, 3))
    out = layer(Tensor(x)).data
    for g in range(2):
        group = slice(2 * g, 2 * g + 2)
        expected = ops.conv2d_direct(x[:, group], layer.k0.data, layer.spec)
        np.testing.assert_allclose(out[:, group], expected, atol=1e-12)


def test_phm_with_n1_is_dense(wide, rng):
    layer = PHMLinear(6, 3, n=1, name='fc')
    layer.bias.data[...] = rng.normal(size=3)
    x = rng.normal(size=(4, 6))
    expected = x @ layer.blocks.data[0].T + layer.bias.data
    np.testing.assert_allclose(layer(Tensor(x)).data, expected, atol=1e-12)


def test_phm_weight_matrix_is_kronecker_sum(wide):
    layer = PHMLinear(10, 5, n=5, name='fc')
    signs = build_phm_sign_matrices(5).matrices
    expected = sum(np.kron(signs[t], layer.blocks.data[t]) for t in range(5))
    np.testing.assert_allclose(layer.weight_matrix().data, expected)


def test_phm_rejects_wrong_input_width(wide):
    layer = PHMLinear(8, 4, n=4, name='fc')
    with pytest.raises(ShapeError):
        layer(Tensor(np.zeros((2, 6))))


@pytest.mark.parametrize('make, remedy', [
    (lambda: QuaternionConv2d(6, 8), 'divisible by 4'),
    (lambda: VectormapConv2d(9, 10, dim=3), 'divisible by 3'),
    (lambda: PHMLinear(10, 6, n=4), 'choose N dividing both d and k'),
    ])
def test_divisibility_errors_name_a_remedy(make, remedy):
    with pytest.raises(DivisibilityError, match=remedy):
        make()


def test_make_conv_dispatch():
    assert type(make_conv('real', 4, 4)) is Conv2d
    assert type(make_conv('quaternion', 4, 4)) is QuaternionConv2d
    conv = make_conv('vectormap', 6, 6, dim=3)
    assert type(conv) is VectormapConv2d and conv.dim == 3
    assert algebra_multiple('vectormap', 5) == 5
    with pytest.raises(ConfigError):
        make_conv('octonion', 8, 8)


def test_parameter_ratios():
    spec = ConvSpec.same(3)
    real = Conv2d(48, 48, spec).count_params()
    assert QuaternionConv2d(48, 48, spec).count_params() * 4 == real
    vect = VectormapConv2d(48, 48, dim=3, spec=spec)
    assert (vect.count_params() - 9) * 3 == real
    dense = Linear(40, 20).count_params()
    assert PHMLinear(40, 20, n=4).count_params() == (dense - 20) // 4 + 20
    assert PHMLinear(40, 20, n=5).count_params() == (dense - 20) // 5 + 20


def test_parameter_names_are_stable():
    names = [name for name, _ in VectormapConv2d(3, 3, dim=3)
             .named_parameters('conv')]
    assert names == ['conv.k0', 'conv.k1', 'conv.k2', 'conv.l']
    phm = PHMLinear(4, 4, n=2, trainable_signs=True)
    assert [name for name, _ in phm.named_parameters()] == ['blocks', 'bias',
                                                            'signs']


def test_init_is_deterministic_per_name():
    a = QuaternionConv2d(8, 8, name='conv', init=InitSpec(seed=7))
    b = QuaternionConv2d(8, 8, name='conv', init=InitSpec(seed=7))
    c = QuaternionConv2d(8, 8, name='other', init=InitSpec(seed=7))
    np.testing.assert_array_equal(a.r.data, b.r.data)
    assert not np.array_equal(a.r.data, c.r.data)
    assert not np.array_equal(a.r.data, a.x.data)
    init_weights(c, InitSpec(scheme='zeros'))
    np.testing.assert_array_equal(c.r.data, 0.)


def test_init_rejects_unknown_scheme():
    with pytest.raises(ConfigError):
        InitSpec(scheme='orthogonal')


@pytest.mark.parametrize('make', [
    lambda: Conv2d(64, 64, ConvSpec.same(3), name='c'),
    lambda: QuaternionConv2d(64, 64, ConvSpec.same(3), name='q'),
    ])
def test_init_variance(wide, make):
    """Assembled kernels have variance 2 / (C kH kW) whatever the algebra"""
    layer = make()
    values = np.concatenate([p.data.ravel() for p in layer.parameters()])
    assert np.isclose(values.var(), 2. / (64 * 9), rtol=0.1)


def test_L_and_sign_init():
    conv = VectormapConv2d(5, 5, dim=5)
    np.testing.assert_array_equal(conv.l.data, build_L_matrix(5).entries)
    assert not conv.l.decay
    phm = PHMLinear(5, 5, n=5, trainable_signs=True)
    np.testing.assert_array_equal(phm.signs.data,
                                  build_phm_sign_matrices(5).matrices)
    assert phm.trainable_signs and not PHMLinear(5, 5, n=5).trainable_signs


def test_batch_norm_layer_modes(rng):
    bn = BatchNorm2d(3, name='bn')
    x = Tensor(rng.normal(size=(4, 3, 2, 2)))
    bn(x)
    assert [path for path, _ in bn.named_buffers('bn')] == ['bn']
    bn.eval()
    assert not bn.training
    assert bn(x).shape == x.shape


def test_trace_counts_macs():
    conv = Conv2d(1, 1, ConvSpec.same(3))
    out, records = conv.trace((1, 32, 32))
    assert out == (1, 32, 32)
    assert records[0].macs == 9 * 32 * 32
    assert records[0].params == 9
    assert Linear(10, 4).macs((10,)) == 40
