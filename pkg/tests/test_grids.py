"""Grid, field containers, and the staggered calculus."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdmfg import (DensityField, FaceVelocityField, ScalarField, TimeGrid,
                      build_grid, cell_inner, divergence, face_inner, gradient,
                      integrate, l1_distance)


def test_grid_geometry(grid1d):
    assert grid1d.dim == 1
    assert grid1d.h == (0.05,)
    assert grid1d.cell_volume == pytest.approx(0.05)
    assert grid1d.volume == pytest.approx(2.0)
    assert len(grid1d.centers()) == 40
    assert len(grid1d.faces()) == 41
    # centers sit halfway between faces
    assert np.allclose(grid1d.centers(), 0.5 * (grid1d.faces()[:-1] + grid1d.faces()[1:]))


def test_grid_2d_shapes(grid2d):
    assert grid2d.shape == (16, 12)
    assert grid2d.face_shape(0) == (17, 12)
    assert grid2d.face_shape(1) == (16, 13)
    assert grid2d.cell_volume == pytest.approx((2.0 / 16) * (1.5 / 12))


def test_time_grid():
    tg = TimeGrid(1.0, 4)
    assert tg.dt == 0.25
    assert np.allclose(tg.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


def test_density_mass_pinned(grid1d, rng):
    d = DensityField.from_values(grid1d, rng.uniform(0.5, 2.0, grid1d.shape))
    assert abs(d.mass - 1.0) <= 1e-10


def test_density_rejects_negative(grid1d):
    vals = np.full(grid1d.shape, 0.5)
    vals[3] = -0.1
    with pytest.raises(ValueError):
        DensityField(grid1d, vals)


def test_density_cap_enforced_when_constrained(grid1d):
    vals = np.zeros(grid1d.shape)
    vals[:10] = 2.0
    with pytest.raises(ValueError):
        DensityField.from_values(grid1d, vals, constrained=True)
    # same field is fine without the flag
    DensityField.from_values(grid1d, vals, constrained=False)


def test_velocity_boundary_pinned(grid1d, rng):
    comps = [rng.standard_normal(grid1d.face_shape(0))]
    v = FaceVelocityField(grid1d, comps)
    assert v.components[0][0] == 0.0
    assert v.components[0][-1] == 0.0


def test_velocity_boundary_pinned_2d(grid2d, rng):
    v = FaceVelocityField(grid2d, [rng.standard_normal(grid2d.face_shape(a))
                                   for a in range(2)])
    assert np.all(v.components[0][0, :] == 0.0)
    assert np.all(v.components[0][-1, :] == 0.0)
    assert np.all(v.components[1][:, 0] == 0.0)
    assert np.all(v.components[1][:, -1] == 0.0)


def test_gradient_of_linear_field(grid1d):
    f = ScalarField(grid1d, 3.0 * grid1d.centers())
    g = gradient(f)
    # exact slope on interior faces, pinned at the walls
    assert np.allclose(g.components[0][1:-1], 3.0)
    assert g.components[0][0] == 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), two_d=st.booleans())
def test_divergence_is_negative_adjoint_of_gradient(seed, two_d):
    """<grad f, v> = -<f, div v>: the summation-by-parts identity the whole
    projection analysis rests on, exact because boundary faces carry zero."""
    rng = np.random.default_rng(seed)
    grid = build_grid(((0.0, 1.0), (0.0, 2.0)), (7, 5)) if two_d \
        else build_grid((0.0, 1.5), 11)
    f = ScalarField(grid, rng.standard_normal(grid.shape))
    v = FaceVelocityField(grid, [rng.standard_normal(grid.face_shape(a))
                                 for a in range(grid.dim)])
    lhs = face_inner(gradient(f), v)
    rhs = -cell_inner(f, divergence(v))
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(lhs)))


def test_integrate_weighted(grid1d):
    f = ScalarField(grid1d, np.ones(grid1d.shape))
    assert integrate(f) == pytest.approx(2.0)
    d = DensityField.uniform(grid1d)
    assert integrate(f, d) == pytest.approx(1.0)


def test_l1_distance_symmetry(grid1d, rng):
    a = ScalarField(grid1d, rng.standard_normal(grid1d.shape))
    b = ScalarField(grid1d, rng.standard_normal(grid1d.shape))
    assert l1_distance(a, b) == l1_distance(b, a)
    assert l1_distance(a, a) == 0.0
