"""Cone projection: convex-projection structure plus an exact oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdmfg import (EPS_SAT, DensityField, FaceVelocityField, build_grid,
                      cone_violation, face_inner, project_velocity)
from conftest import (brute_force_cone_projection, random_density,
                      saturated_lcp_instance)


def _face_norm(v):
    return np.sqrt(face_inner(v, v))


def _minus(v, w):
    return FaceVelocityField(v.grid, [v.components[a] - w.components[a]
                                      for a in range(v.grid.dim)])


def test_unsaturated_density_passes_through(grid1d, rng):
    rho = random_density(grid1d, rng, cap=0.9)
    u = FaceVelocityField(grid1d, [rng.standard_normal(grid1d.face_shape(0))])
    res = project_velocity(rho, u)
    assert res.sweeps == 0
    assert np.array_equal(res.v.components[0], u.components[0])
    assert np.all(res.p == 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_projection_feasible_and_complementary(seed):
    rho, u = saturated_lcp_instance(24, seed)
    res = project_velocity(rho, u, tol=1e-11)
    assert res.converged
    assert res.p.min() >= 0.0
    assert np.all(res.p[~res.saturated] == 0.0)
    assert cone_violation(rho, res.v) <= 1e-8
    assert res.comp_residual <= 1e-8
    assert res.orth_residual <= 1e-8 * max(1.0, _face_norm(u) ** 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_idempotence(seed):
    rho, u = saturated_lcp_instance(24, seed)
    once = project_velocity(rho, u, tol=1e-11)
    twice = project_velocity(rho, once.v, tol=1e-11)
    drift = _face_norm(_minus(twice.v, once.v))
    assert drift <= 1e-8 * max(1.0, _face_norm(u))
    assert np.max(twice.p) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_non_expansiveness(seed):
    """Projection onto a convex cone contracts distances in the face metric."""
    rho, u1 = saturated_lcp_instance(24, seed)
    rng = np.random.default_rng(seed + 10 ** 7)
    u2 = FaceVelocityField(rho.grid,
                           [2.0 * rng.standard_normal(rho.grid.face_shape(0))])
    v1 = project_velocity(rho, u1, tol=1e-11).v
    v2 = project_velocity(rho, u2, tol=1e-11).v
    assert _face_norm(_minus(v1, v2)) <= _face_norm(_minus(u1, u2)) + 1e-8


@pytest.mark.parametrize("seed", range(12))
def test_matches_active_set_enumeration(seed):
    """Projected Gauss-Seidel agrees with the exhaustive active-set solve on
    an 8-cell grid, in both pressure and velocity."""
    rho, u = saturated_lcp_instance(8, seed)
    p_ref, v_ref = brute_force_cone_projection(rho, u)
    res = project_velocity(rho, u, tol=1e-12)
    assert res.converged
    assert np.max(np.abs(res.p - p_ref)) <= 1e-6
    assert np.max(np.abs(res.v.components[0] - v_ref.components[0])) <= 1e-6


def test_two_dimensional_projection():
    """A 2d saturated patch pushed inward develops positive pressure and a
    divergence-free correction on the patch."""
    grid = build_grid(((0.0, 2.0), (0.0, 2.0)), (12, 12))
    patch = np.zeros(grid.shape, dtype=bool)
    patch[4:8, 4:8] = True
    vol = grid.cell_volume
    background = (1.0 - patch.sum() * vol) / ((~patch).sum() * vol)
    vals = np.where(patch, 1.0, background)
    sat_target = patch
    rho = DensityField(grid, vals, constrained=True)
    # compressive field: everything points at the domain center
    cx = [grid.faces(0) - 1.0, grid.centers(1) - 1.0]
    comps = [np.zeros(grid.face_shape(0)), np.zeros(grid.face_shape(1))]
    comps[0] = -np.broadcast_to(cx[0][:, None], grid.face_shape(0)).copy()
    comps[1] = -np.broadcast_to((grid.faces(1) - 1.0)[None, :],
                                grid.face_shape(1)).copy()
    u = FaceVelocityField(grid, comps)
    res = project_velocity(rho, u, tol=1e-10)
    assert res.converged
    assert np.array_equal(res.saturated, sat_target)
    assert res.p[res.saturated].max() > 0.0
    assert cone_violation(rho, res.v) <= 1e-7


def test_warm_start_reduces_sweeps():
    rho, u = saturated_lcp_instance(60, 5)
    cold = project_velocity(rho, u, tol=1e-11)
    warm = project_velocity(rho, u, tol=1e-11, p0=cold.p)
    assert warm.sweeps < cold.sweeps
    assert np.max(np.abs(warm.p - cold.p)) <= 1e-9


def test_auto_relaxation_converges():
    rho, u = saturated_lcp_instance(60, 2)
    res = project_velocity(rho, u, tol=1e-11, omega=None)
    assert res.converged
    ref = project_velocity(rho, u, tol=1e-12, omega=1.5)
    assert np.max(np.abs(res.p - ref.p)) <= 1e-8
