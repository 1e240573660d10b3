import numpy as np
import pytest

from pyphm.algebra import (Quaternion, hamilton_product,
                           left_multiplication_matrix, permute_tau,
                           circulant_index, build_L_matrix, kron,
                           build_phm_sign_matrices, assemble_H, phm_layout,
                           compare_phm5_layout, TABULATED_PHM5)
from pyphm.errors import ConfigError, ShapeError
from pyphm.tensor import Tensor


def test_hamilton_product_examples():
    q = Quaternion(0.5, -1., 2., 3.)
    assert Quaternion(1., 0., 0., 0.) * q == q
    i = Quaternion(0., 1., 0., 0.)
    j = Quaternion(0., 0., 1., 0.)
    assert i * i == Quaternion(-1., 0., 0., 0.)
    assert i * j == Quaternion(0., 0., 0., 1.)


def test_hamilton_product_norm_is_multiplicative(rng):
    for _ in range(20):
        p = Quaternion.from_array(rng.normal(size=4))
        q = Quaternion.from_array(rng.normal(size=4))
        assert np.isclose((p * q).norm(), p.norm() * q.norm(), rtol=1e-10)
        np.testing.assert_allclose((p * p.conjugate()).as_array(),
                                   [p.norm()**2, 0., 0., 0.], atol=1e-12)


def test_hamilton_product_componentwise_arrays(rng):
    p = Quaternion.from_array(rng.normal(size=(4, 6)))
    q = Quaternion.from_array(rng.normal(size=(4, 6)))
    product = hamilton_product(p, q).as_array()
    for col in range(6):
        single = hamilton_product(Quaternion.from_array(p.as_array()[:, col]),
                                  Quaternion.from_array(q.as_array()[:, col]))
        np.testing.assert_allclose(product[:, col], single.as_array())


def test_left_multiplication_matrix(rng):
    p = Quaternion.from_array(rng.normal(size=4))
    q = Quaternion.from_array(rng.normal(size=4))
    np.testing.assert_allclose(left_multiplication_matrix(p) @ q.as_array(),
                               (p * q).as_array(), atol=1e-12)


def test_permute_tau():
    assert permute_tau(['v1', 'v2', 'v3']) == ['v3', 'v1', 'v2']
    assert permute_tau(['v1', 'v2', 'v3'], 2) == ['v2', 'v3', 'v1']
    for dim in range(1, 9):
        v = list(range(dim))
        assert permute_tau(v, dim) == v
        assert sorted(permute_tau(v)) == v
    with pytest.raises(ConfigError):
        permute_tau([])


def test_circulant_index_rows_are_shifts():
    table = circulant_index(4)
    for i in range(4):
        assert list(table[i]) == permute_tau(range(4), i)


@pytest.mark.parametrize('dim, expected', [
    (1, [[1]]),
    (3, [[1, 1, 1], [-1, 1, 1], [-1, 1, 1]]),
    (5, [[1, 1, 1, 1, 1],
         [-1, 1, 1, -1, -1],
         [-1, -1, 1, -1, 1],
         [-1, 1, -1, 1, -1],
         [-1, -1, -1, 1, 1]]),
    ])
def test_build_L_matrix(dim, expected):
    lmatrix = build_L_matrix(dim)
    np.testing.assert_array_equal(lmatrix.entries, expected)
    assert lmatrix.is_sign_matrix()


def test_build_L_matrix_rejects_zero():
    with pytest.raises(ConfigError):
        build_L_matrix(0)


def test_kron_examples(rng):
    np.testing.assert_array_equal(kron(np.eye(2), [[3.]]).data, 3. * np.eye(2))
    np.testing.assert_array_equal(kron([[0., 1.], [-1., 0.]], [[5.]]).data,
                                  [[0., 5.], [-5., 0.]])
    a, x = rng.normal(size=(2, 2, 3)), rng.normal(size=(3, 2))
    b, y = rng.normal(size=(2, 2)), rng.normal(size=(2, 3))
    left = kron(a[0], b).data @ kron(x, y).data
    np.testing.assert_allclose(left, kron(a[0] @ x, b @ y).data, atol=1e-10)
    with pytest.raises(ShapeError):
        kron(np.ones(3), np.ones((2, 2)))


@pytest.mark.parametrize('n', [1, 2, 3, 4, 5, 6])
def test_sign_matrices_are_signed_permutations(n):
    signs = build_phm_sign_matrices(n)
    assert signs.problems() == []
    np.testing.assert_array_equal(signs[0], np.eye(n))
    np.testing.assert_array_equal(np.abs(signs.matrices).sum(axis=0),
                                  np.ones((n, n)))


def test_sign_matrices_n1_and_n5():
    np.testing.assert_array_equal(build_phm_sign_matrices(1).matrices,
                                  [[[1.]]])
    signs = build_phm_sign_matrices(5)
    # A_4 row 4 holds its entry in column 2 with a positive sign
    np.testing.assert_array_equal(signs[3][3], [0., 1., 0., 0., 0.])
    np.testing.assert_array_equal(signs[1][0], [0., 1., 0., 0., 0.])
    np.testing.assert_array_equal(signs[1][4], [-1., 0., 0., 0., 0.])


def test_sign_matrices_n4_is_hamilton():
    signs = build_phm_sign_matrices(4)
    assert signs.construction == 'hamilton'
    s = np.array([0.3, -1.2, 0.7, 2.])
    H = sum(signs[t] * s[t] for t in range(4))
    np.testing.assert_array_equal(
        H, left_multiplication_matrix(Quaternion.from_array(s)))


@pytest.mark.parametrize('n', [3, 5])
def test_sign_pattern_matches_L_matrix(n):
    np.testing.assert_array_equal(build_phm_sign_matrices(n).sign_pattern(),
                                  build_L_matrix(n).entries)


@pytest.mark.parametrize('n', [2, 3, 5, 6])
def test_circulant_sign_matrices_follow_the_index_table(n):
    signs = build_phm_sign_matrices(n)
    table = circulant_index(n)
    for t in range(n):
        np.testing.assert_array_equal(signs[t] != 0, table == t)


def test_sign_pattern_n4_differs_from_L_matrix():
    pattern = build_phm_sign_matrices(4).sign_pattern()
    assert not np.array_equal(pattern, build_L_matrix(4).entries)


def test_assemble_H_small_cases(rng):
    np.testing.assert_array_equal(
        assemble_H(build_phm_sign_matrices(1), [[[3.]]]).data, [[3.]])
    signs = build_phm_sign_matrices(2)
    blocks = rng.normal(size=(2, 3, 2))
    expected = np.kron(signs[0], blocks[0]) + np.kron(signs[1], blocks[1])
    np.testing.assert_allclose(assemble_H(signs, list(blocks)).data, expected,
                               atol=1e-12)
    with pytest.raises(ShapeError):
        assemble_H(signs, [np.ones((3, 2)), np.ones((2, 2))])


def test_assemble_H_identity_anchor(rng):
    """Only S_1 non-zero: H is the block-diagonal embedding of S_1"""
    signs = build_phm_sign_matrices(3)
    s1 = rng.normal(size=(2, 2))
    blocks = [s1, np.zeros((2, 2)), np.zeros((2, 2))]
    np.testing.assert_array_equal(assemble_H(signs, blocks).data,
                                  np.kron(np.eye(3), s1))


def test_assemble_H_keeps_tape():
    signs = build_phm_sign_matrices(2)
    blocks = Tensor(np.ones((2, 1, 1)), requires_grad=True)
    assert assemble_H(signs, blocks).requires_grad


def test_phm5_first_column():
    """H e_1 with scalar blocks: (P_r, -P_z, -P_y, -P_x, -P_w)"""
    p = {'r': 2., 'w': 3., 'x': 5., 'y': 7., 'z': 11.}
    H = assemble_H(build_phm_sign_matrices(5),
                   [[[p[s]]] for s in 'rwxyz']).data
    np.testing.assert_array_equal(H[:, 0], [p['r'], -p['z'], -p['y'],
                                            -p['x'], -p['w']])


def test_phm5_layout_differs_only_at_cell_4_2():
    layout = phm_layout(build_phm_sign_matrices(5))
    same = sum(layout[i][j] == TABULATED_PHM5[i][j]
               for i in range(5) for j in range(5))
    assert same == 24
    mismatches = compare_phm5_layout()
    assert len(mismatches) == 1
    cell = mismatches[0]
    assert (cell.row, cell.col) == (4, 2)
    assert (cell.tabulated, cell.constructed) == ('-y', '+y')
    assert str(cell) == ('cell (4,2): tabulated -P_y, Kronecker sum gives '
                         '+P_y')
