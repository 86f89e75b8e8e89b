"""Tensor-product space: indexing, multivariate evaluation, dof classification."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from spacetime_iga.splines import KnotVector, eval_basis, refine_uniform, single_span
from spacetime_iga.tensor_space import (DiscreteSpace, build_space,
                                        classify_dirichlet, eval_multivariate)


def make_space(degrees=(2, 2), levels=(1, 1), weights=None):
    kvs = []
    for p, lv in zip(degrees, levels):
        kv = single_span(p)
        for _ in range(lv):
            kv = refine_uniform(kv)
        kvs.append(kv)
    return build_space(kvs, weights)


def dense_point(space, xi, max_deriv=2):
    """Scatter eval_multivariate to full-length arrays for comparison."""
    mb = eval_multivariate(space, xi, max_deriv)
    n = space.dim
    vals = np.zeros(n)
    grads = np.zeros((n, space.ndim))
    hess = np.zeros((n, space.ndim, space.ndim))
    vals[mb.active] = mb.values
    grads[mb.active] = mb.gradients
    hess[mb.active] = mb.hessians
    return vals, grads, hess


def test_flat_multi_roundtrip():
    space = make_space((1, 2, 2), (1, 1, 0))
    for flat in range(space.dim):
        assert space.flat_index(space.multi_index(flat)) == flat
    # direction 0 is fastest
    assert space.flat_index((1, 0, 0)) == 1
    assert space.flat_index((0, 1, 0)) == space.dims[0]


def test_dims_and_strides():
    space = make_space((2, 3), (2, 1))
    n0, n1 = space.dims
    assert space.dim == n0 * n1
    assert space.strides == (1, n0)
    assert space.degrees == (2, 3)


def test_values_match_univariate_products():
    space = make_space((2, 3), (2, 1))
    rng = np.random.default_rng(11)
    for _ in range(20):
        xi = rng.uniform(0, 1, 2)
        vals, grads, hess = dense_point(space, xi)
        # oracle: outer products of univariate rows scattered by hand
        rows = [eval_basis(kv, float(x)) for kv, x in zip(space.knot_vectors, xi)]
        full = [np.zeros((3, kv.n)) for kv in space.knot_vectors]
        for r, f in zip(rows, full):
            i0 = r.first_active
            f[0, i0:i0 + r.values.size] = r.values
            f[1, i0:i0 + r.values.size] = r.first_derivs
            f[2, i0:i0 + r.values.size] = r.second_derivs
        n0 = space.dims[0]
        for flat in range(space.dim):
            i, j = flat % n0, flat // n0
            assert abs(vals[flat] - full[0][0, i] * full[1][0, j]) < 1e-13
            assert abs(grads[flat, 0] - full[0][1, i] * full[1][0, j]) < 1e-11
            assert abs(grads[flat, 1] - full[0][0, i] * full[1][1, j]) < 1e-11
            assert abs(hess[flat, 0, 1] - full[0][1, i] * full[1][1, j]) < 1e-10
            assert abs(hess[flat, 1, 1] - full[0][0, i] * full[1][2, j]) < 1e-9


def test_gradients_match_finite_differences():
    space = make_space((2, 2, 2), (1, 1, 1))
    rng = np.random.default_rng(12)
    e = 1e-5
    for _ in range(5):
        xi = rng.uniform(0.1, 0.9, 3)
        _, grads, hess = dense_point(space, xi)
        for a in range(3):
            dp, dm = xi.copy(), xi.copy()
            dp[a] += e
            dm[a] -= e
            fd = (dense_point(space, dp)[0] - dense_point(space, dm)[0]) / (2 * e)
            assert np.abs(grads[:, a] - fd).max() < 1e-5
            fdg = (dense_point(space, dp)[1] - dense_point(space, dm)[1]) / (2 * e)
            assert np.abs(hess[:, :, a] - fdg).max() < 1e-4


def test_partition_of_unity_multivariate():
    for weights in (None, 'random'):
        space = make_space((2, 2), (2, 2))
        if weights == 'random':
            rng = np.random.default_rng(13)
            space = make_space((2, 2), (2, 2), weights=rng.uniform(0.5, 2.0, space.dim))
        rng = np.random.default_rng(14)
        for _ in range(15):
            xi = rng.uniform(0, 1, 2)
            mb = eval_multivariate(space, xi)
            assert abs(mb.values.sum() - 1.0) < 1e-12
            assert np.abs(mb.gradients.sum(axis=0)).max() < 1e-10
            assert np.abs(mb.hessians.sum(axis=0)).max() < 1e-8


def test_unit_weights_reduce_to_bspline():
    plain = make_space((2, 2), (1, 1))
    weighted = make_space((2, 2), (1, 1), weights=np.full(plain.dim, 3.7))
    rng = np.random.default_rng(15)
    for _ in range(10):
        xi = rng.uniform(0, 1, 2)
        a = eval_multivariate(plain, xi)
        b = eval_multivariate(weighted, xi)
        assert_allclose(a.values, b.values, atol=1e-14)
        assert_allclose(a.gradients, b.gradients, atol=1e-13)
        assert_allclose(a.hessians, b.hessians, atol=1e-12)


def test_nurbs_derivatives_match_finite_differences():
    rng = np.random.default_rng(16)
    base = make_space((2, 2), (1, 1))
    space = make_space((2, 2), (1, 1), weights=rng.uniform(0.5, 2.0, base.dim))
    e = 1e-5
    for _ in range(8):
        xi = rng.uniform(0.1, 0.9, 2)
        mb = eval_multivariate(space, xi)
        vals = np.zeros(space.dim)
        vals[mb.active] = mb.values
        grads = np.zeros((space.dim, 2))
        grads[mb.active] = mb.gradients
        hess = np.zeros((space.dim, 2, 2))
        hess[mb.active] = mb.hessians
        for a in range(2):
            dp, dm = xi.copy(), xi.copy()
            dp[a] += e
            dm[a] -= e
            vp = np.zeros(space.dim)
            vm = np.zeros(space.dim)
            rp = eval_multivariate(space, dp, 1)
            rm = eval_multivariate(space, dm, 1)
            vp[rp.active] = rp.values
            vm[rm.active] = rm.values
            assert np.abs(grads[:, a] - (vp - vm) / (2 * e)).max() < 1e-5
            gp = np.zeros((space.dim, 2))
            gm = np.zeros((space.dim, 2))
            gp[rp.active] = rp.gradients
            gm[rm.active] = rm.gradients
            assert np.abs(hess[:, :, a] - (gp - gm) / (2 * e)).max() < 1e-4


def test_classify_dirichlet_hand_mask():
    # one space + one time direction: lateral = both x ends, initial = t first
    space = make_space((2, 2), (1, 1))
    n0, n1 = space.dims
    dm = classify_dirichlet(space)
    for flat in range(space.dim):
        i, j = space.multi_index(flat)
        expect = i in (0, n0 - 1) or j == 0
        assert dm.dirichlet_mask[flat] == expect
    assert dm.n_free == (n0 - 2) * (n1 - 1)
    # partition: free and dirichlet are complementary and consistent
    assert np.array_equal(np.flatnonzero(~dm.dirichlet_mask), dm.free)
    assert np.all(dm.free_inverse[dm.free] == np.arange(dm.n_free))
    assert np.all(dm.free_inverse[dm.dirichlet_mask] == -1)


def test_classify_dirichlet_terminal_face_free():
    space = make_space((2, 2), (1, 1))
    dm = classify_dirichlet(space)
    n0, n1 = space.dims
    # interior-in-x dofs on the last time layer stay free
    for i in range(1, n0 - 1):
        assert not dm.dirichlet_mask[space.flat_index((i, n1 - 1))]


def test_classify_dirichlet_3d_counts():
    space = make_space((1, 1, 2), (1, 1, 1))
    n0, n1, n2 = space.dims
    dm = classify_dirichlet(space)
    assert dm.n_free == (n0 - 2) * (n1 - 2) * (n2 - 1)


def test_space_validation():
    with pytest.raises(ValueError):
        build_space([single_span(2)])  # needs space + time
    kvs = [single_span(1), single_span(1)]
    with pytest.raises(ValueError):
        build_space(kvs, weights=np.ones(3))  # wrong length
    with pytest.raises(ValueError):
        build_space(kvs, weights=np.array([1.0, 1.0, -1.0, 1.0]))  # nonpositive
    with pytest.raises(ValueError):
        eval_multivariate(build_space(kvs), np.array([0.5]))  # wrong point size
