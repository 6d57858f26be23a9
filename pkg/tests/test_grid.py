import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_backward, dense_forward, dense_neumann_laplacian, kron_axis

from mfgplay.errors import ShapeError
from mfgplay.grid import (
    GridSpec,
    SidedPair,
    adjoint_divergence,
    central_gradient,
    difference_matrices,
    grid_norm,
    inner_product,
    laplacian,
    laplacian_matrix,
    one_sided_gradients,
    pair_inner_product,
    prolongate,
    refine_array,
    slice_inner_product,
)

GRIDS = [
    GridSpec(-1.0, 2.0, 7, 1.0, 3),
    GridSpec(0.0, 1.0, 2, 0.5, 1),
    GridSpec((-1.0, 0.0), (1.0, 3.0), (5, 4), 1.0, 2),
    GridSpec((0.0, 0.0), (1.0, 1.0), (3, 6), 2.0, 1),
]


def _rand_slice(grid, rng):
    return rng.standard_normal(grid.spatial_shape)


def test_grid_geometry():
    g = GridSpec(-5.0, 5.0, 10, 1.0, 4)
    assert g.dim == 1
    assert g.dx == (1.0,)
    assert g.dt == 0.25
    assert g.field_shape == (5, 11)
    assert g.axes[0][0] == -5.0 and g.axes[0][-1] == 5.0
    g2 = GridSpec((0, 0), (1, 2), (4, 8), 1.0, 2)
    assert g2.spatial_shape == (5, 9)
    assert g2.cell_volume == pytest.approx(0.25 * 0.25)
    assert g2.mesh.shape == (2, 5, 9)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(x_min=0.0, x_max=1.0, n_x=0),
        dict(x_min=1.0, x_max=0.0, n_x=4),
        dict(x_min=0.0, x_max=1.0, n_x=4, n_t=0),
        dict(x_min=0.0, x_max=1.0, n_x=4, T=0.0),
        dict(x_min=(0, 0, 0), x_max=(1, 1, 1), n_x=4),
    ],
)
def test_grid_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)


def test_refine_doubles_resolution():
    g = GridSpec(0.0, 1.0, 4, 1.0, 3, level=1).refine()
    assert g.n_x == (8,) and g.n_t == 6 and g.level == 2


@pytest.mark.parametrize("grid", GRIDS)
def test_sided_differences_match_dense(grid):
    rng = np.random.default_rng(0)
    u = _rand_slice(grid, rng)
    g = one_sided_gradients(u, grid)
    for j, h in enumerate(grid.dx):
        n = grid.spatial_shape[j]
        dp = kron_axis(dense_forward(n, h), grid.spatial_shape, j)
        dm = kron_axis(dense_backward(n, h), grid.spatial_shape, j)
        np.testing.assert_allclose(g.plus[j].ravel(), dp @ u.ravel(), atol=1e-12)
        np.testing.assert_allclose(g.minus[j].ravel(), dm @ u.ravel(), atol=1e-12)
    plus, minus = difference_matrices(grid)
    for j, h in enumerate(grid.dx):
        n = grid.spatial_shape[j]
        np.testing.assert_allclose(plus[j].toarray(), kron_axis(dense_forward(n, h), grid.spatial_shape, j))
        np.testing.assert_allclose(minus[j].toarray(), kron_axis(dense_backward(n, h), grid.spatial_shape, j))


@pytest.mark.parametrize("grid", GRIDS)
def test_laplacian_matches_dense_and_is_self_adjoint(grid):
    rng = np.random.default_rng(1)
    u, w = _rand_slice(grid, rng), _rand_slice(grid, rng)
    dense = sum(
        kron_axis(dense_neumann_laplacian(grid.spatial_shape[j], h), grid.spatial_shape, j) for j, h in enumerate(grid.dx)
    )
    np.testing.assert_allclose(laplacian(u, grid).ravel(), dense @ u.ravel(), rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(laplacian_matrix(grid).toarray(), dense, atol=1e-12)
    lhs = slice_inner_product(laplacian(u, grid), w, grid)
    rhs = slice_inner_product(u, laplacian(w, grid), grid)
    assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))
    # Neumann: constants are in the kernel
    np.testing.assert_allclose(laplacian(np.ones(grid.spatial_shape), grid), 0.0, atol=1e-12)


@pytest.mark.parametrize("grid", GRIDS)
def test_adjoint_divergence_is_adjoint_of_sided_gradient(grid):
    rng = np.random.default_rng(2)
    u = _rand_slice(grid, rng)
    shape = (grid.dim, *grid.spatial_shape)
    v = SidedPair(rng.standard_normal(shape), rng.standard_normal(shape))
    lhs = pair_inner_product(one_sided_gradients(u, grid), v, grid)
    rhs = slice_inner_product(u, adjoint_divergence(v, grid), grid)
    assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))
    # and it equals the dense half-weighted transpose
    dense = np.zeros(grid.n_points)
    for j, h in enumerate(grid.dx):
        n = grid.spatial_shape[j]
        dp = kron_axis(dense_forward(n, h), grid.spatial_shape, j)
        dm = kron_axis(dense_backward(n, h), grid.spatial_shape, j)
        dense += 0.5 * (dp.T @ v.plus[j].ravel() + dm.T @ v.minus[j].ravel())
    np.testing.assert_allclose(adjoint_divergence(v, grid).ravel(), dense, atol=1e-12)


def test_laplacian_is_minus_forward_gram():
    grid = GRIDS[0]
    rng = np.random.default_rng(3)
    u = _rand_slice(grid, rng)
    g = one_sided_gradients(u, grid)
    # Lap = -(D+)^T D+, expressed through the adjoint with a zero minus part
    via_adjoint = -2.0 * adjoint_divergence(SidedPair(g.plus, np.zeros_like(g.plus)), grid)
    np.testing.assert_allclose(laplacian(u, grid), via_adjoint, atol=1e-10)


def test_central_gradient_exact_on_linear_interior():
    grid = GridSpec(0.0, 2.0, 8)
    u = 3.0 * grid.axes[0] - 1.0
    c = central_gradient(one_sided_gradients(u, grid))
    np.testing.assert_allclose(c[0, 1:-1], 3.0)
    # one-sided halves at the ends because D+ vanishes last and D- first
    assert c[0, 0] == pytest.approx(1.5) and c[0, -1] == pytest.approx(1.5)


def test_inner_products_and_norm():
    grid = GridSpec(0.0, 1.0, 4, 1.0, 2)
    u = np.ones(grid.field_shape)
    assert inner_product(u, u, grid) == pytest.approx(0.5 * 0.25 * 15)
    assert grid_norm(2 * u, grid) == pytest.approx(2 * np.sqrt(0.5 * 0.25 * 15))
    with pytest.raises(ShapeError):
        inner_product(u, np.ones((2, 5)), grid)


@settings(max_examples=40, deadline=None)
@given(
    c=st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=4),
    nx=st.integers(2, 6),
    ny=st.integers(2, 6),
    nt=st.integers(1, 4),
)
def test_prolongation_reproduces_multilinear_functions(c, nx, ny, nt):
    # u = c0 + c1 t + c2 x + c3 y, plus a bilinear term x*y checked separately below
    grid = GridSpec((0.0, -1.0), (1.0, 2.0), (nx, ny), 1.0, nt)
    fine = grid.refine()

    def f(gr):
        t = gr.times[:, None, None]
        x, y = gr.mesh[0][None], gr.mesh[1][None]
        return c[0] + c[1] * t + c[2] * x + c[3] * y + c[2] * x * y

    np.testing.assert_allclose(prolongate(f(grid), grid), f(fine), atol=1e-11)


def test_prolongation_bilinear_2d_exact():
    grid = GridSpec((0.0, 0.0), (2.0, 3.0), (3, 5), 1.0, 2)
    fine = grid.refine()
    fn = lambda g: (g.times[:, None, None] + 1) * (g.mesh[0] * g.mesh[1])[None]  # noqa: E731
    np.testing.assert_allclose(prolongate(fn(grid), grid), fn(fine), atol=1e-12)


def test_refine_array_shape_and_copy():
    u = np.arange(6.0).reshape(2, 3)
    r = refine_array(u)
    assert r.shape == (3, 5)
    np.testing.assert_array_equal(r[::2, ::2], u)


def test_prolongate_rejects_wrong_target():
    grid = GridSpec(0.0, 1.0, 4, 1.0, 2)
    with pytest.raises(ShapeError):
        prolongate(grid.zeros(), grid, GridSpec(0.0, 1.0, 8, 1.0, 2))


def test_hand_evaluated_stencils():
    grid = GridSpec(0.0, 1.0, 2)
    g = one_sided_gradients(grid.axes[0], grid)
    np.testing.assert_allclose(g.plus[0], [1, 1, 0])
    np.testing.assert_allclose(g.minus[0], [0, 1, 1])
    np.testing.assert_allclose(central_gradient(g)[0], [0.5, 1, 0.5])
    ones = np.ones((1, 3))
    np.testing.assert_allclose(adjoint_divergence(SidedPair(ones, ones), grid), [-2, 0, 2])
    np.testing.assert_array_equal(adjoint_divergence(SidedPair(0 * ones, 0 * ones), grid), 0.0)
    const = one_sided_gradients(np.full(3, 4.2), grid)
    assert not const.plus.any() and not const.minus.any()


def test_laplacian_of_linear_function_hits_boundary_only():
    grid = GridSpec(0.0, 2.0, 4)
    lap = laplacian(grid.axes[0], grid)
    h = grid.dx[0]
    np.testing.assert_allclose(lap, [1 / h, 0, 0, 0, -1 / h], atol=1e-12)


def test_norm_of_ones_on_single_cell():
    grid = GridSpec(0.0, 1.0, 1, 1.0, 1)
    assert grid_norm(np.ones(grid.field_shape), grid) == pytest.approx(2.0)
    assert grid_norm(grid.zeros(), grid) == 0.0


def test_prolongation_midpoint_and_constants():
    np.testing.assert_allclose(refine_array(np.array([0.0, 1.0])), [0.0, 0.5, 1.0])
    grid = GridSpec((0, 0), (1, 1), (3, 2), 1.0, 2)
    np.testing.assert_array_equal(prolongate(np.full(grid.field_shape, 2.5), grid), 2.5)


@pytest.mark.parametrize("grid", GRIDS)
def test_laplacian_negative_semidefinite_and_linear(grid):
    rng = np.random.default_rng(5)
    for _ in range(5):
        u, w = _rand_slice(grid, rng), _rand_slice(grid, rng)
        assert slice_inner_product(u, laplacian(u, grid), grid) <= 1e-12
        a, b = rng.standard_normal(2)
        np.testing.assert_allclose(laplacian(a * u + b * w, grid), a * laplacian(u, grid) + b * laplacian(w, grid), atol=1e-11)
        gu, gw = one_sided_gradients(u, grid), one_sided_gradients(w, grid)
        gs = one_sided_gradients(a * u + b * w, grid)
        np.testing.assert_allclose(gs.plus, a * gu.plus + b * gw.plus, atol=1e-12)
        np.testing.assert_allclose(gs.minus, a * gu.minus + b * gw.minus, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), nx=st.integers(1, 8), ny=st.integers(1, 8))
def test_adjointness_random_2d(seed, nx, ny):
    grid = GridSpec((0.0, 0.0), (1.0, 2.0), (nx, ny))
    rng = np.random.default_rng(seed)
    u = _rand_slice(grid, rng)
    shape = (2, *grid.spatial_shape)
    v = SidedPair(rng.standard_normal(shape), rng.standard_normal(shape))
    lhs = pair_inner_product(one_sided_gradients(u, grid), v, grid)
    rhs = slice_inner_product(u, adjoint_divergence(v, grid), grid)
    scale = grid.cell_volume * np.sum(np.abs(one_sided_gradients(u, grid).plus * v.plus)) + 1.0
    assert abs(lhs - rhs) <= 1e-13 * scale
