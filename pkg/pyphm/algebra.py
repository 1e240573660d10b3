# -*- coding: utf-8 -*-
"""
Hypercomplex algebra behind the layers: quaternions and the Hamilton
product, the circular shift and sign (L) matrix of vectormap convolution,
and the sum of Kronecker products that assembles a PHM weight.

Channel and component indices are 0-based in code. The L-matrix rule and
the reporting of the five-dimensional PHM layout use 1-based (row, col)
labels, the way they are usually written down.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import ops
from .errors import ConfigError, ShapeError
from .tensor import Tensor, as_tensor

# component labels of the five-dimensional PHM weight, in A_t order
PHM5_SYMBOLS = ('r', 'w', 'x', 'y', 'z')

# five-dimensional PHM layout as it is usually tabulated; entry (i, j) is
# the signed block found in row i, column j of H
TABULATED_PHM5 = (('+r', '+w', '+x', '+y', '+z'),
                  ('-z', '+r', '+w', '-x', '-y'),
                  ('-y', '-z', '+r', '-w', '+x'),
                  ('-x', '-y', '-z', '+r', '-w'),
                  ('-w', '-x', '-y', '+z', '+r'))


#%% quaternions
@dataclass
class Quaternion:
    """
    r + ix + jy + kz. Components are scalars or same-shaped arrays, in
    which case every operation acts componentwise.
    """
    r: float = 0.
    x: float = 0.
    y: float = 0.
    z: float = 0.

    def __iter__(self):
        return iter((self.r, self.x, self.y, self.z))

    def __mul__(self, other):
        return hamilton_product(self, other)

    def as_array(self):
        return np.array([self.r, self.x, self.y, self.z])

    @classmethod
    def from_array(cls, values):
        r, x, y, z = values
        return cls(r, x, y, z)

    def conjugate(self):
        return Quaternion(self.r, -self.x, -self.y, -self.z)

    def norm(self):
        return np.sqrt(self.r**2 + self.x**2 + self.y**2 + self.z**2)


def hamilton_product(p, q):
    """p * q with i^2 = j^2 = k^2 = ijk = -1"""
    return Quaternion(r=p.r*q.r - p.x*q.x - p.y*q.y - p.z*q.z,
                      x=p.r*q.x + p.x*q.r + p.y*q.z - p.z*q.y,
                      y=p.r*q.y - p.x*q.z + p.y*q.r + p.z*q.x,
                      z=p.r*q.z + p.x*q.y - p.y*q.x + p.z*q.r)


def left_multiplication_matrix(p):
    """4x4 real matrix M with M @ q == (p * q) for q as (r, x, y, z)"""
    return np.array([[p.r, -p.x, -p.y, -p.z],
                     [p.x, p.r, -p.z, p.y],
                     [p.y, p.z, p.r, -p.x],
                     [p.z, -p.y, p.x, p.r]])


#%% vectormap structure
def permute_tau(v, power=1):
    """
    Circular right shift of the components of v, applied power times:
    component i receives component i-1 and the first receives the last.
    """
    v = list(v)
    if len(v) < 1:
        raise ConfigError('needs at least one component', field='v')
    if power < 0:
        raise ConfigError('must be non-negative', field='power')
    shift = power % len(v)
    if shift == 0:
        return v
    return v[-shift:] + v[:-shift]


def circulant_index(dim):
    """
    [dim, dim] table of kernel indices; row i holds permute_tau(range(dim), i)
    so entry (i, j) is (j - i) mod dim.
    """
    return scipy.linalg.circulant(np.arange(dim)).T


@dataclass
class LMatrix:
    """Sign matrix mixing the components of a vectormap convolution"""
    dim: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.entries.shape != (self.dim, self.dim):
            raise ShapeError('L matrix entries must be dim x dim',
                             self.entries.shape)

    def is_sign_matrix(self):
        return bool(np.all(np.abs(self.entries) == 1.))


def build_L_matrix(dim):
    """
    Initial L for dimension dim. With 1-based indices, l_ij is +1 when
    i = 1, i = j, or j = Cal_i = ((2i - 2) mod dim) + 1, and -1 otherwise.

    >>> build_L_matrix(3).entries
    array([[ 1.,  1.,  1.],
           [-1.,  1.,  1.],
           [-1.,  1.,  1.]])
    """
    if dim < 1:
        raise ConfigError('must be at least 1, got %d' % dim, field='dim')
    entries = -np.ones((dim, dim))
    for i in range(1, dim + 1):
        cal = (2*i - 2) % dim + 1
        for j in range(1, dim + 1):
            if i == 1 or i == j or j == cal:
                entries[i - 1, j - 1] = 1.
    return LMatrix(dim=dim, entries=entries)


#%% Kronecker products and PHM sign matrices
def kron(a, b):
    """Kronecker product of two matrices; block (i, j) is a[i, j] * b"""
    a = np.asarray(a.data if isinstance(a, Tensor) else a)
    b = np.asarray(b.data if isinstance(b, Tensor) else b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError('kron takes two matrices', a.shape, b.shape)
    out = np.kron(a, b)
    return Tensor(out, dtype=out.dtype)


@dataclass
class SignMatrixSet:
    """
    The fixed structure matrices A_1..A_n of a PHM layer, stacked as
    matrices[t] for t = 0..n-1. Each one is a signed permutation; the
    first is the identity and together their supports tile the n x n grid.
    """
    n: int
    matrices: np.ndarray = field(repr=False)
    construction: str = 'circulant'

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.shape != (self.n, self.n, self.n):
            raise ShapeError('sign matrices must be stacked as [n, n, n]',
                             self.matrices.shape)

    def __len__(self):
        return self.n

    def __getitem__(self, t):
        return self.matrices[t]

    def sign_pattern(self):
        """Signs of sum_t A_t (x) [1]"""
        return self.matrices.sum(axis=0)

    def problems(self):
        """Every violated structural property, as readable strings"""
        found = []
        support = np.abs(self.matrices)
        for t, matrix in enumerate(self.matrices):
            if not np.all(np.isin(matrix, (-1., 0., 1.))):
                found.append('A_%d has entries outside {-1, 0, 1}' % (t + 1))
            if not (np.all(support[t].sum(axis=0) == 1) and
                    np.all(support[t].sum(axis=1) == 1)):
                found.append('A_%d is not a signed permutation' % (t + 1))
        if not np.array_equal(self.matrices[0], np.eye(self.n)):
            found.append('A_1 is not the identity')
        if not np.array_equal(support.sum(axis=0), np.ones((self.n, self.n))):
            found.append('supports do not tile the %d x %d grid'
                         % (self.n, self.n))
        return found


def build_phm_sign_matrices(n):
    """
    Structure matrices for an n-dimensional PHM layer.

    n = 4 gives the Hamilton product: A_t is left multiplication by the
    t-th quaternion unit (1, i, j, k). Every other n uses circulant
    placement, A_t[i, (i + t) mod n] = L[i, (i + t) mod n] with L from
    build_L_matrix(n).
    """
    if n < 1:
        raise ConfigError('must be at least 1, got %d' % n, field='n')
    matrices = np.zeros((n, n, n))
    if n == 4:
        for t in range(4):
            unit = Quaternion.from_array(np.eye(4)[t])
            matrices[t] = left_multiplication_matrix(unit)
        construction = 'hamilton'
    else:
        signs = build_L_matrix(n).entries
        index = circulant_index(n)
        for t in range(n):
            matrices[t] = np.where(index == t, signs, 0.)
        construction = 'circulant'
    signs = SignMatrixSet(n=n, matrices=matrices, construction=construction)
    problems = signs.problems()
    if problems:
        raise ConfigError('; '.join(problems), field='n')
    return signs


def assemble_H(signs, blocks):
    """
    H = sum_t A_t (x) S_t.

    blocks is either a list of n arrays or Tensors of one shape [k/n, d/n],
    or a single Tensor stacked as [n, k/n, d/n]. A stacked Tensor keeps
    its place on the tape so H is differentiable in the blocks.
    """
    if isinstance(blocks, Tensor):
        stacked = blocks
    else:
        blocks = [b.data if isinstance(b, Tensor) else np.asarray(b)
                  for b in blocks]
        shapes = [b.shape for b in blocks]
        if len(set(shapes)) != 1 or len(shapes[0]) != 2:
            raise ShapeError('PHM blocks must all share one matrix shape',
                             *shapes)
        stacked = np.stack(blocks)
        stacked = Tensor(stacked, dtype=stacked.dtype)
    if stacked.shape[0] != signs.n:
        raise ShapeError('need %d PHM blocks' % signs.n, stacked.shape)
    a = as_tensor(signs.matrices, like=stacked)
    return ops.kron_sum(a, stacked)


#%% five-dimensional layout report
def phm_layout(signs, symbols=PHM5_SYMBOLS):
    """Signed symbol found at every cell of sum_t A_t (x) [s_t]"""
    n = signs.n
    table = []
    for i in range(n):
        row = []
        for j in range(n):
            t = int(np.flatnonzero(signs.matrices[:, i, j])[0])
            sign = '+' if signs.matrices[t, i, j] > 0 else '-'
            row.append(sign + symbols[t])
        table.append(tuple(row))
    return tuple(table)


@dataclass
class CellMismatch:
    row: int
    col: int
    tabulated: str
    constructed: str

    def __str__(self):
        return ('cell (%d,%d): tabulated %sP_%s, Kronecker sum gives %sP_%s'
                % (self.row, self.col, self.tabulated[0], self.tabulated[1:],
                   self.constructed[0], self.constructed[1:]))


def compare_phm5_layout(printout=False):
    """
    Compare the tabulated five-dimensional PHM layout with the one the
    Kronecker sum of build_phm_sign_matrices(5) produces. Returns a list of
    CellMismatch with 1-based row and column.
    """
    constructed = phm_layout(build_phm_sign_matrices(5))
    mismatches = []
    for i in range(5):
        for j in range(5):
            if TABULATED_PHM5[i][j] != constructed[i][j]:
                mismatches.append(CellMismatch(i + 1, j + 1,
                                               TABULATED_PHM5[i][j],
                                               constructed[i][j]))
    if printout is True:
        print(format_layout(constructed))
        for mismatch in mismatches:
            print(mismatch)
    return mismatches


def format_layout(table):
    return '\n'.join(' '.join('%3s' % cell for cell in row) for row in table)
