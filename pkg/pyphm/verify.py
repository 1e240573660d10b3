# -*- coding: utf-8 -*-
"""
Self checks of the hypercomplex algebra, the layers and their gradients.

Three suites, each returning a SuiteReport of named CheckResults:
    algebra_suite()   quaternion identities (units, norm, bilinearity), the
                      circular shift, the L matrix, Kronecker products,
                      the PHM sign matrices and block-diagonal anchor, the
                      five-dimensional layout report and the PHM /
                      Hamilton product bridge
    layer_suite()     every hypercomplex layer against a slow oracle on
                      random small instances
    gradcheck_suite() finite difference checks over a menu of layers

The oracles here are deliberately naive (explicit block matrices, loops
over channel groups, Kronecker products one term at a time) and share no
code path with the layers beyond conv2d_direct.
"""
import zlib
from dataclasses import dataclass, field

import numpy as np
import structlog

from . import ops
from .algebra import (Quaternion, hamilton_product, left_multiplication_matrix,
                      permute_tau, build_L_matrix, build_phm_sign_matrices,
                      assemble_H, compare_phm5_layout, kron)
from .autodiff import TapeNode, grad_check
from .layers import (QuaternionConv2d, VectormapConv2d, PHMLinear,
                     quaternion_conv2d, vectormap_conv2d, phm_linear)
from .models import Bottleneck
from .tensor import Tensor, ConvSpec, precision

log = structlog.get_logger()

# L matrices written out by hand from the case rule
EXPECTED_L = {
    1: [[1]],
    3: [[1, 1, 1],
        [-1, 1, 1],
        [-1, 1, 1]],
    5: [[1, 1, 1, 1, 1],
        [-1, 1, 1, -1, -1],
        [-1, -1, 1, -1, 1],
        [-1, 1, -1, 1, -1],
        [-1, -1, -1, 1, 1]],
    }

ORACLE_TOLERANCE = 1e-10
BRIDGE_TOLERANCE = 1e-12
DEFAULT_MENU = ('phm', 'quatconv', 'vectconv', 'block')


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''
    error: float = None

    def __str__(self):
        mark = 'PASS' if self.passed else 'FAIL'
        text = '  [%s] %s' % (mark, self.name)
        if self.error is not None:
            text += '  (%.2e)' % self.error
        if self.detail:
            text += ': ' + self.detail
        return text


@dataclass
class SuiteReport:
    title: str
    results: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, name, passed, detail='', error=None):
        result = CheckResult(name, bool(passed), detail, error)
        self.results.append(result)
        return result

    @property
    def passed(self):
        return all(result.passed for result in self.results)

    @property
    def failures(self):
        return [result for result in self.results if not result.passed]

    def summary(self):
        lines = [self.title]
        lines.extend(str(result) for result in self.results)
        lines.extend('  note: %s' % note for note in self.notes)
        lines.append('  %d of %d checks passed' % (
            len(self.results) - len(self.failures), len(self.results)))
        return '\n'.join(lines)


def relative_gap(actual, expected):
    actual = np.asarray(actual.data if isinstance(actual, Tensor) else actual)
    expected = np.asarray(expected.data if isinstance(expected, Tensor)
                          else expected)
    scale = max(float(np.max(np.abs(expected))), 1e-12)
    return float(np.max(np.abs(actual - expected))) / scale


def wide(values):
    return Tensor(values, dtype=np.float64)


#%% algebra
def check_hamilton_units(report):
    one = Quaternion(1., 0., 0., 0.)
    i = Quaternion(0., 1., 0., 0.)
    j = Quaternion(0., 0., 1., 0.)
    k = Quaternion(0., 0., 0., 1.)
    minus_one = Quaternion(-1., 0., 0., 0.)
    identities = {'i*i = -1': (i * i, minus_one),
                  'j*j = -1': (j * j, minus_one),
                  'k*k = -1': (k * k, minus_one),
                  'i*j*k = -1': (i * j * k, minus_one),
                  'i*j = k': (i * j, k),
                  'j*k = i': (j * k, i),
                  'k*i = j': (k * i, j),
                  'j*i = -k': (j * i, Quaternion(0., 0., 0., -1.)),
                  '1*q = q': (one * i, i)}
    wrong = [name for name, (got, want) in identities.items()
             if not np.array_equal(got.as_array(), want.as_array())]
    report.add('quaternion unit identities', not wrong, ', '.join(wrong))


def check_norm_multiplicative(report, rng, pairs=1000):
    """|p*q|^2 = |p|^2 |q|^2, all pairs at once"""
    p = Quaternion.from_array(rng.normal(size=(4, pairs)))
    q = Quaternion.from_array(rng.normal(size=(4, pairs)))
    gap = relative_gap((p * q).norm()**2, p.norm()**2 * q.norm()**2)
    report.add('quaternion norm is multiplicative (%d pairs)' % pairs,
               gap < ORACLE_TOLERANCE, error=gap)


def check_bilinearity(report, rng, pairs=1000):
    """(a p1 + b p2) q = a p1 q + b p2 q, and the same on the right"""
    p1, p2, q1, q2 = (rng.normal(size=(4, pairs)) for _ in range(4))
    a, b = rng.normal(size=(2, pairs))

    def mul(left, right):
        return hamilton_product(Quaternion.from_array(left),
                                Quaternion.from_array(right)).as_array()

    left = relative_gap(mul(a * p1 + b * p2, q1),
                        a * mul(p1, q1) + b * mul(p2, q1))
    right = relative_gap(mul(p1, a * q1 + b * q2),
                         a * mul(p1, q1) + b * mul(p1, q2))
    gap = max(left, right)
    report.add('Hamilton product is bilinear (%d pairs)' % pairs,
               gap < ORACLE_TOLERANCE, error=gap)


def check_identity_anchor(report, rng, dims=(2, 3, 4, 5)):
    """Only the first block non-zero: H is diag(S_1, ..., S_1)"""
    for n in dims:
        first = rng.normal(size=(3, 2))
        blocks = [first] + [np.zeros((3, 2))] * (n - 1)
        H = assemble_H(build_phm_sign_matrices(n), blocks).data
        ok = np.array_equal(H, kron(np.eye(n), first).data)
        report.add('PHM n=%d with only the first block is block diagonal'
                   % n, ok)


def check_left_multiplication(report, rng, pairs=100):
    worst = 0.
    for _ in range(pairs):
        p = Quaternion.from_array(rng.normal(size=4))
        q = Quaternion.from_array(rng.normal(size=4))
        product = hamilton_product(p, q).as_array()
        worst = max(worst, float(np.max(np.abs(
            left_multiplication_matrix(p) @ q.as_array() - product))))
    report.add('left multiplication matrix reproduces p*q',
               worst < BRIDGE_TOLERANCE, error=worst)


def check_tau(report, max_dim=8):
    wrong = []
    for dim in range(1, max_dim + 1):
        v = list(range(dim))
        if permute_tau(v, dim) != v:
            wrong.append('tau^%d != identity' % dim)
        if dim > 1 and permute_tau(v, 1) != [dim - 1] + v[:-1]:
            wrong.append('tau on %d components is not a right shift' % dim)
        for a in range(dim):
            if permute_tau(permute_tau(v, a), dim - a) != v:
                wrong.append('tau^%d tau^%d != identity for dim %d'
                             % (a, dim - a, dim))
    report.add('circular shift is cyclic of order D', not wrong,
               '; '.join(wrong))


def check_L_matrices(report):
    for dim, expected in EXPECTED_L.items():
        lmatrix = build_L_matrix(dim)
        ok = np.array_equal(lmatrix.entries, np.array(expected, dtype=float))
        report.add('L matrix rule for D=%d' % dim,
                   ok and lmatrix.is_sign_matrix(),
                   '' if ok else 'got %s' % lmatrix.entries.tolist())


def check_mixed_product(report, rng, trials=20):
    worst = 0.
    for _ in range(trials):
        m, n, p, q, r, s = rng.integers(1, 5, size=6)
        a = rng.normal(size=(m, n))
        b = rng.normal(size=(p, q))
        c = rng.normal(size=(n, r))
        d = rng.normal(size=(q, s))
        left = kron(a, b).data @ kron(c, d).data
        worst = max(worst, relative_gap(left, kron(a @ c, b @ d)))
    report.add('Kronecker mixed product (A x B)(C x D) = AC x BD',
               worst < ORACLE_TOLERANCE, error=worst)


def check_sign_matrices(report, dims=(1, 2, 3, 4, 5)):
    for n in dims:
        signs = build_phm_sign_matrices(n)
        problems = signs.problems()
        report.add('PHM sign matrices n=%d are signed permutations tiling the '
                   'grid' % n, not problems, '; '.join(problems))
    for n in (3, 5):
        pattern = build_phm_sign_matrices(n).sign_pattern()
        ok = np.array_equal(pattern, build_L_matrix(n).entries)
        report.add('PHM sign pattern n=%d equals the L matrix' % n, ok)
    hamilton = build_phm_sign_matrices(4).sign_pattern()
    differ = np.argwhere(hamilton != build_L_matrix(4).entries) + 1
    report.notes.append('n=4 follows the Hamilton product; its sign pattern '
                        'differs from the L matrix at %d cells' % len(differ))


def check_phm5_layout(report):
    """
    Assemble H from the five sign matrices and distinct scalar blocks, read
    back which block and sign landed in each cell, and compare with the
    tabulated layout. Exactly cell (4,2) differs.
    """
    signs = build_phm_sign_matrices(5)
    scalars = np.array([2., 3., 5., 7., 11.])
    H = assemble_H(signs, [np.array([[s]]) for s in scalars]).data
    placed = np.abs(H[..., None]) == scalars
    consistent = bool(np.all(placed.sum(axis=-1) == 1))
    mismatches = compare_phm5_layout()
    expected_cell = (len(mismatches) == 1 and
                     (mismatches[0].row, mismatches[0].col) == (4, 2) and
                     mismatches[0].constructed == '+y')
    report.add('five-dimensional layout: one block per cell',
               consistent)
    report.add('five-dimensional layout matches the table at 24 of 25 cells',
               expected_cell, '; '.join(str(m) for m in mismatches))
    report.notes.extend(str(m) for m in mismatches)


def check_bridge(report, rng, pairs=1000):
    """PHM with n=4 and scalar blocks p is left multiplication by p"""
    signs = build_phm_sign_matrices(4)
    worst = 0.
    for _ in range(pairs):
        p = rng.normal(size=4)
        q = rng.normal(size=4)
        H = assemble_H(signs, [np.array([[c]]) for c in p]).data
        product = hamilton_product(Quaternion.from_array(p),
                                   Quaternion.from_array(q)).as_array()
        worst = max(worst, float(np.max(np.abs(H @ q - product))))
    report.add('PHM n=4 with scalar blocks equals the Hamilton product '
               '(%d pairs)' % pairs, worst < BRIDGE_TOLERANCE, error=worst)


def algebra_suite(seed=0, printout=False):
    rng = np.random.default_rng(seed)
    report = SuiteReport('algebra identities')
    with precision('wide'):
        check_hamilton_units(report)
        check_norm_multiplicative(report, rng)
        check_bilinearity(report, rng)
        check_left_multiplication(report, rng)
        check_tau(report)
        check_L_matrices(report)
        check_mixed_product(report, rng)
        check_sign_matrices(report)
        check_phm5_layout(report)
        check_bridge(report, rng)
        check_identity_anchor(report, rng)
    log.info('algebra suite finished', passed=report.passed,
             failures=len(report.failures))
    if printout is True:
        print(report.summary())
    return report


#%% layer oracles
def quaternion_block_kernel(r, x, y, z):
    """
    Full kernel written out block by block from the Hamilton product;
    rows of blocks run over output channels, columns over input channels
    """
    rows = [[r, -x, -y, -z],
            [x, r, -z, y],
            [y, z, r, -x],
            [z, -y, x, r]]
    return np.concatenate([np.concatenate(row, axis=1) for row in rows],
                          axis=0)


def vectormap_group_loop(x, kernels, lmatrix, spec):
    """Output group i = sum_j L[i, j] * conv(group j, K_{(j - i) mod D})"""
    dim = len(kernels)
    width = x.shape[1] // dim
    groups = [x[:, j * width:(j + 1) * width] for j in range(dim)]
    outputs = []
    for i in range(dim):
        total = 0.
        for j in range(dim):
            total = total + lmatrix[i, j] * ops.conv2d_direct(
                groups[j], kernels[(j - i) % dim], spec)
        outputs.append(total)
    return np.concatenate(outputs, axis=1)


def phm_materialized(x, signs, blocks, bias):
    n = len(blocks)
    H = np.zeros((n * blocks[0].shape[0], n * blocks[0].shape[1]))
    for t in range(n):
        H = H + np.kron(signs[t], blocks[t])
    return x @ H.T + bias


def random_conv_case(rng, dim):
    groups_in = int(rng.integers(1, 3))
    groups_out = int(rng.integers(1, 3))
    kernel = int(rng.choice([1, 3]))
    spec = ConvSpec(kernel=kernel, stride=int(rng.integers(1, 3)),
                    padding=int(rng.integers(0, 2)) if kernel == 3 else 0)
    size = int(rng.integers(kernel, 6))
    x = rng.normal(size=(1, dim * groups_in, size, size))
    kernels = [rng.normal(size=(groups_out, groups_in, kernel, kernel))
               for _ in range(dim)]
    return x, kernels, spec


def check_quaternion_oracle(report, rng, instances):
    worst = 0.
    for _ in range(instances):
        x, kernels, spec = random_conv_case(rng, 4)
        got = quaternion_conv2d(wide(x), [wide(k) for k in kernels], spec)
        expected = ops.conv2d_direct(x, quaternion_block_kernel(*kernels),
                                     spec)
        worst = max(worst, relative_gap(got, expected))
    report.add('quaternion conv2d vs block-matrix expansion (%d instances)'
               % instances, worst < ORACLE_TOLERANCE, error=worst)


def check_vectormap_oracle(report, rng, instances):
    worst = 0.
    for _ in range(instances):
        dim = int(rng.integers(1, 5))
        x, kernels, spec = random_conv_case(rng, dim)
        lmatrix = build_L_matrix(dim).entries * rng.uniform(0.5, 1.5,
                                                            size=(dim, dim))
        got = vectormap_conv2d(wide(x), [wide(k) for k in kernels],
                               wide(lmatrix), spec)
        expected = vectormap_group_loop(x, kernels, lmatrix, spec)
        worst = max(worst, relative_gap(got, expected))
    report.add('vectormap conv2d vs per-group loop (%d instances)'
               % instances, worst < ORACLE_TOLERANCE, error=worst)


def check_phm_oracle(report, rng, instances):
    worst = 0.
    for _ in range(instances):
        n = int(rng.integers(1, 6))
        d = n * int(rng.integers(1, 8 // n + 1))
        k = n * int(rng.integers(1, 8 // n + 1))
        signs = build_phm_sign_matrices(n).matrices
        blocks = rng.normal(size=(n, k // n, d // n))
        bias = rng.normal(size=k)
        x = rng.normal(size=(int(rng.integers(1, 4)), d))
        got = phm_linear(wide(x), wide(signs), wide(blocks), wide(bias))
        expected = phm_materialized(x, signs, blocks, bias)
        worst = max(worst, relative_gap(got, expected))
    report.add('PHM linear vs materialized sum of Kronecker products '
               '(%d instances)' % instances, worst < ORACLE_TOLERANCE,
               error=worst)


def check_conv_oracle(report, rng, instances):
    worst = 0.
    for _ in range(instances):
        x, kernels, spec = random_conv_case(rng, 1)
        got = ops.conv2d(wide(x), wide(kernels[0]), spec)
        worst = max(worst, relative_gap(got, ops.conv2d_direct(x, kernels[0],
                                                                spec)))
    report.add('im2col conv2d vs direct loops (%d instances)' % instances,
               worst < ORACLE_TOLERANCE, error=worst)


def layer_suite(seed=0, instances=100, printout=False):
    rng = np.random.default_rng(seed)
    report = SuiteReport('layer oracles')
    with precision('wide'):
        check_conv_oracle(report, rng, instances)
        check_quaternion_oracle(report, rng, instances)
        check_vectormap_oracle(report, rng, instances)
        check_phm_oracle(report, rng, instances)
    log.info('layer suite finished', passed=report.passed,
             failures=len(report.failures))
    if printout is True:
        print(report.summary())
    return report


#%% gradient checks
class FlippedScale(TapeNode):
    """Scale whose backward has the wrong sign; the check must catch it"""
    op = 'flipped_scale'

    def forward(self, a, factor=1.):
        self.saved['factor'] = factor
        return a * a.dtype.type(factor)

    def backward(self, grad):
        return (-grad * grad.dtype.type(self.saved['factor']),)


def named(layer, x=None):
    params = dict(layer.named_parameters(layer.name or ''))
    if x is not None:
        params['input'] = x
    return params


def phm_case(rng, n):
    d, k = {4: (8, 8), 5: (10, 5)}.get(n, (2 * n, n))
    layer = PHMLinear(d, k, n=n, name='phm')
    x = Tensor(rng.normal(size=(3, d)), requires_grad=True)
    return (lambda: ops.half_squared_norm(layer(x))), named(layer, x)


def quatconv_case(rng):
    layer = QuaternionConv2d(8, 8, ConvSpec.same(3), name='quatconv')
    x = Tensor(rng.normal(size=(2, 8, 4, 4)), requires_grad=True)
    return (lambda: ops.half_squared_norm(layer(x))), named(layer, x)


def vectconv_case(rng):
    layer = VectormapConv2d(6, 6, dim=3, spec=ConvSpec.same(3),
                            name='vectconv')
    x = Tensor(rng.normal(size=(2, 6, 4, 4)), requires_grad=True)
    return (lambda: ops.half_squared_norm(layer(x))), named(layer, x)


def block_case(rng):
    """Quaternion bottleneck of width 8 with cross-entropy on pooled output"""
    block = Bottleneck(8, 8, stride=1, algebra='quaternion', name='block')
    x = Tensor(rng.normal(size=(2, 8, 4, 4)), requires_grad=True)
    labels = rng.integers(0, 32, size=2)
    block.train()
    block(x)
    block.eval()

    def loss():
        return ops.cross_entropy(ops.global_avg_pool(block(x)), labels)
    return loss, named(block, x)


def faulty_case(rng):
    layer = PHMLinear(4, 4, n=2, name='faulty')
    x = Tensor(rng.normal(size=(2, 4)))

    def loss():
        return ops.half_squared_norm(FlippedScale.apply(layer(x), factor=2.))
    return loss, named(layer)


MENU = {'phm': [('phm n=4', lambda rng: phm_case(rng, 4)),
                ('phm n=5', lambda rng: phm_case(rng, 5))],
        'quatconv': [('quatconv 3x3', quatconv_case)],
        'vectconv': [('vectconv 3x3', vectconv_case)],
        'block': [('quaternion bottleneck', block_case)],
        'faulty': [('flipped backward', faulty_case)]}


def gradcheck_suite(menu=DEFAULT_MENU, eps=1e-5, threshold=1e-5, seed=0,
                    printout=False):
    """
    grad_check over the named menu entries, in wide precision. The report
    carries one check per case with its worst parameter path.
    """
    unknown = [name for name in menu if name not in MENU]
    if unknown:
        raise KeyError('unknown gradcheck entries %s; choose from %s'
                       % (unknown, sorted(MENU)))
    report = SuiteReport('gradient checks, eps=%g, threshold=%g'
                         % (eps, threshold))
    with precision('wide'):
        for entry in menu:
            for label, case in MENU[entry]:
                rng = np.random.default_rng([seed,
                                             zlib.crc32(label.encode())])
                loss_fn, params = case(rng)
                grads = grad_check(loss_fn, params, eps=eps)
                report.add(label, grads.passed(threshold),
                           'worst %s' % grads.worst, error=grads.max_error)
    log.info('gradient checks finished', passed=report.passed,
             failures=len(report.failures))
    if printout is True:
        print(report.summary())
    return report
