"""Upwind transport: conservation, monotonicity, and the weak defect."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdmfg import (DensityField, FaceVelocityField, ScalarField,
                      SpaceTimeField, TimeGrid, advect_step, build_grid,
                      l1_distance, solve_continuity, weak_residual)
from conftest import random_density


def _random_velocity(grid, rng, scale=1.0):
    return FaceVelocityField(grid, [scale * rng.standard_normal(grid.face_shape(a))
                                    for a in range(grid.dim)])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_mass_conserved_exactly(seed):
    rng = np.random.default_rng(seed)
    grid = build_grid((0.0, 2.0), 30)
    rho = random_density(grid, rng)
    v = _random_velocity(grid, rng)
    out, rep = advect_step(rho, v, 0.01)
    assert abs(out.mass - 1.0) <= 1e-12
    assert rep.substeps >= 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_positivity_preserved(seed):
    rng = np.random.default_rng(seed)
    grid = build_grid((0.0, 2.0), 30)
    vals = np.zeros(grid.shape)
    vals[12:18] = 1.0
    rho = DensityField.from_values(grid, vals)
    v = _random_velocity(grid, rng, scale=2.0)
    out, _ = advect_step(rho, v, 0.05)
    assert out.values.min() >= 0.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_l1_contraction(seed):
    """Monotone conservative schemes contract L1 between any two solutions
    advected by the same velocity field."""
    rng = np.random.default_rng(seed)
    grid = build_grid((0.0, 2.0), 30)
    a = random_density(grid, rng)
    b = random_density(grid, np.random.default_rng(seed + 1))
    v = _random_velocity(grid, rng)
    before = l1_distance(a, b)
    a2, _ = advect_step(a, v, 0.02)
    b2, _ = advect_step(b, v, 0.02)
    assert l1_distance(a2, b2) <= before + 1e-12


def test_translation_speed(grid1d):
    """A block advected at speed 1 for t=0.5 lands 0.5 to the right (up to
    the scheme's numerical diffusion, measured in L1)."""
    vals = np.where(np.abs(grid1d.centers() - 0.5) < 0.25, 1.0, 0.0)
    rho = DensityField.from_values(grid1d, vals)
    v = FaceVelocityField(grid1d, [np.ones(grid1d.face_shape(0))])
    tg = TimeGrid(0.5, 50)
    traj = solve_continuity(rho, SpaceTimeField.constant(tg, v), tg)
    target = DensityField.from_values(
        grid1d, np.where(np.abs(grid1d.centers() - 1.0) < 0.25, 1.0, 0.0))
    # donor-cell smears the jumps by O(sqrt(v h t)); the bulk still lands
    assert l1_distance(traj[-1], target) < 0.6
    # center of mass moved by ~0.5
    com = float(np.sum(grid1d.centers() * traj[-1].values) * grid1d.cell_volume)
    assert com == pytest.approx(1.0, abs=0.02)


def test_no_flux_walls(grid1d):
    """Everything pushed hard at a wall stays inside and piles up."""
    rho = DensityField.uniform(grid1d)
    v = FaceVelocityField(grid1d, [3.0 * np.ones(grid1d.face_shape(0))])
    tg = TimeGrid(1.0, 40)
    traj = solve_continuity(rho, SpaceTimeField.constant(tg, v), tg)
    final = traj[-1]
    assert abs(float(np.sum(final.values)) * grid1d.cell_volume - 1.0) <= 1e-12
    assert final.values[-1] > final.values[0]


def test_cfl_substepping():
    grid = build_grid((0.0, 1.0), 50)
    rho = DensityField.uniform(grid)
    fast = FaceVelocityField(grid, [40.0 * np.ones(grid.face_shape(0))])
    out, rep = advect_step(rho, fast, 0.1, cfl_target=0.5)
    # dt h / v = 0.02 / 40... one step would sweep 4 domain lengths
    assert rep.substeps >= 400
    assert rep.cfl <= 0.5 + 1e-12
    assert abs(out.mass - 1.0) <= 1e-12


def test_weak_residual_consistency(grid1d, rng):
    """The weak-form defect of a computed trajectory against a smooth test
    function is small, and grows when the trajectory is corrupted."""
    rho = random_density(grid1d, rng)
    v = FaceVelocityField(grid1d, [0.5 * np.sin(np.pi * grid1d.faces())])
    tg = TimeGrid(0.4, 40)
    traj = solve_continuity(rho, SpaceTimeField.constant(tg, v), tg)
    vtraj = SpaceTimeField.constant(tg, v)
    psi = ScalarField(grid1d, np.cos(np.pi * grid1d.centers() / 2.0))
    clean = weak_residual(traj, vtraj, psi)
    assert clean < 0.05
    bad_entries = [e.copy() for e in traj]
    mid = len(bad_entries) // 2
    bump = 0.5 * (grid1d.centers() < 1.0)  # not orthogonal to psi
    bad_entries[mid] = ScalarField(grid1d, bad_entries[mid].values + bump)
    corrupted = weak_residual(SpaceTimeField(tg, bad_entries), vtraj, psi)
    assert corrupted > 5 * clean
