from itertools import combinations

import numpy as np
import pytest

from crowdmfg import EPS_SAT, DensityField, FaceVelocityField, build_grid
from crowdmfg.grids import divergence_values, gradient_values


@pytest.fixture
def grid1d():
    return build_grid((0.0, 2.0), 40)


@pytest.fixture
def grid2d():
    return build_grid(((0.0, 2.0), (0.0, 1.5)), (16, 12))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_density(grid, rng, cap=None):
    """Random positive density with unit mass; optionally under the cap."""
    vals = rng.uniform(0.1, 1.0, size=grid.shape)
    d = DensityField.from_values(grid, vals, normalize=True)
    if cap is not None and d.values.max() > cap:
        # flatten toward uniform until the cap holds
        u = 1.0 / grid.volume
        lam = 0.9 * (cap - u) / (d.values.max() - u)
        d = DensityField.from_values(grid, u + lam * (d.values - u),
                                     normalize=True)
    return d


def saturated_lcp_instance(n, seed, bounds=(0.0, 2.0)):
    """Unit-mass 1d density with a few cells exactly at the cap, plus a
    random face velocity.  Used to exercise the cone projection against the
    enumerated-active-set oracle."""
    rng = np.random.default_rng(seed)
    grid = build_grid(bounds, n)
    s = int(rng.integers(1, 4))
    idx = rng.choice(n, size=s, replace=False)
    vals = np.zeros(n)
    vals[idx] = 1.0
    rest = np.setdiff1d(np.arange(n), idx)
    w = rng.uniform(0.5, 1.0, rest.size)
    w *= (1.0 / grid.cell_volume - s) / w.sum()
    assert w.max() < 1.0 - 2 * EPS_SAT
    vals[rest] = w
    rho = DensityField(grid, vals, constrained=True)
    u = FaceVelocityField(grid, [2.0 * rng.standard_normal(grid.face_shape(0))])
    return rho, u


def brute_force_cone_projection(rho, u, tol=1e-9):
    """Solve the saturated-set pressure complementarity problem exactly.

    On the saturated set S the pressure satisfies p >= 0,
    r = div u - lap p >= 0, p r = 0, with p = 0 off S.  Enumerate every
    active set A within S, solve the linear block (lap p)|_A = (div u)|_A
    with p = 0 elsewhere, and accept the subset whose solution is feasible
    on both sides.  Exponential in |S|; only for tiny grids.
    """
    grid = rho.grid
    sat = rho.saturated(EPS_SAT)
    sat_idx = np.flatnonzero(sat.ravel())
    divu = divergence_values(grid, u.components)

    def lap(pflat):
        return divergence_values(
            grid, gradient_values(grid, pflat.reshape(grid.shape))).ravel()

    ncells = int(np.prod(grid.shape))
    L = np.column_stack([lap(np.eye(ncells)[:, j]) for j in range(ncells)])
    best = None
    for size in range(len(sat_idx) + 1):
        for active in combinations(sat_idx, size):
            a = np.array(active, dtype=int)
            p = np.zeros(ncells)
            if a.size:
                p[a] = np.linalg.solve(L[np.ix_(a, a)], divu.ravel()[a])
            r = divu.ravel() - L @ p
            if a.size and p[a].min() < -tol:
                continue
            inactive = np.setdiff1d(sat_idx, a)
            if inactive.size and r[inactive].min() < -tol:
                continue
            best = p.reshape(grid.shape)
            break
        if best is not None:
            break
    assert best is not None, "no feasible active set found"
    gp = gradient_values(grid, best)
    v = FaceVelocityField(grid, [u.components[ax] - gp[ax]
                                 for ax in range(grid.dim)])
    return best, v
