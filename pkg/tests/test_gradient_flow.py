"""Minimizing-movement flow: descent, a direct-QP oracle, and the diffusion
limit of the congestion penalty."""

import numpy as np
import pytest
from scipy.optimize import minimize

from crowdmfg import (DensityField, JkoConfig, ScalarField, build_grid,
                      density_to_quantiles, flow_energy, jko_step,
                      porous_media_reference, run_gradient_flow,
                      w2_distance_1d)
from crowdmfg.gradient_flow import _jko_objective, _jko_step_q


def _gaussian(grid, center, width):
    x = grid.centers()
    return DensityField.from_values(grid, np.exp(-((x - center) / width) ** 2),
                                    normalize=True)


def test_energies_nonincreasing_both_modes():
    grid = build_grid((0.0, 2.0), 80)
    D = ScalarField.from_function(grid, lambda x: 0.5 * (x - 1.3) ** 2)
    rho0 = _gaussian(grid, 0.7, 0.25)
    for mode, m in (("constrained", 2.0), ("penalized", 4.0)):
        cfg = JkoConfig(tau=2e-3, mode=mode, m=m, n_samples=120)
        _, energies, increments = run_gradient_flow(rho0, D, cfg, 30)
        assert np.all(np.diff(energies) <= 1e-12)
        assert np.all(increments >= 0.0)


def test_steps_move_toward_the_well():
    grid = build_grid((0.0, 2.0), 80)
    D = ScalarField.from_function(grid, lambda x: (x - 1.5) ** 2)
    rho0 = _gaussian(grid, 0.5, 0.2)
    cfg = JkoConfig(tau=5e-3, mode="penalized", m=3.0, n_samples=120)
    dens, _, _ = run_gradient_flow(rho0, D, cfg, 40)
    x = grid.centers()
    com0 = float(np.sum(x * dens[0].values) * grid.cell_volume)
    comT = float(np.sum(x * dens[-1].values) * grid.cell_volume)
    assert comT > com0 + 0.2


def test_single_step_matches_direct_minimization():
    """One inner solve against scipy SLSQP on the same finite-dimensional
    objective (penalized mode, so the only constraint is monotonicity)."""
    grid = build_grid((0.0, 2.0), 40)
    D = ScalarField.from_function(grid, lambda x: 0.8 * (x - 1.2) ** 2)
    rho0 = _gaussian(grid, 0.8, 0.3)
    cfg = JkoConfig(tau=4e-3, mode="penalized", m=3.0, n_samples=24,
                    inner_tol=1e-12, max_inner=20000)
    qk = density_to_quantiles(rho0, cfg.n_samples)
    q_ours, obj_ours = _jko_step_q(qk, D, cfg)

    xc, Dv = grid.centers(), D.values
    n = cfg.n_samples
    cons = [{"type": "ineq", "fun": lambda z, j=j: z[j + 1] - z[j] - 1e-7}
            for j in range(n - 1)]
    cons.append({"type": "ineq", "fun": lambda z: z[0]})
    cons.append({"type": "ineq", "fun": lambda z: 2.0 - z[-1]})
    ref = minimize(lambda z: _jko_objective(z, qk, xc, Dv, cfg), qk,
                   constraints=cons, method="SLSQP",
                   options={"maxiter": 800, "ftol": 1e-14})
    assert ref.success
    assert obj_ours <= ref.fun + 1e-8
    assert np.max(np.abs(q_ours - ref.x)) <= 2e-4


def test_constrained_step_never_breaks_cap():
    grid = build_grid((0.0, 2.0), 100)
    x = grid.centers()
    rho0 = DensityField.from_values(
        grid, np.where(np.abs(x - 1.0) < 0.55, 1.0, 1e-3), normalize=True)
    D = ScalarField.from_function(grid, lambda x: 2.0 * (x - 1.0) ** 2)
    cfg = JkoConfig(tau=2e-3, mode="constrained", n_samples=200)
    dens, _, _ = run_gradient_flow(rho0, D, cfg, 25)
    for d in dens:
        assert d.values.max() <= 1.0 + 1e-8


def test_saturated_block_in_well_is_stationary():
    """A fully saturated block centered on the minimum of a symmetric well
    cannot move: the cap blocks further concentration."""
    grid = build_grid((0.0, 2.0), 100)
    x = grid.centers()
    block = (np.abs(x - 1.0) < 0.5).astype(float)
    rho0 = DensityField.from_values(grid, block, normalize=True,
                                    constrained=True)
    D = ScalarField.from_function(grid, lambda x: 3.0 * (x - 1.0) ** 2)
    cfg = JkoConfig(tau=5e-3, mode="constrained", n_samples=200)
    dens, energies, _ = run_gradient_flow(rho0, D, cfg, 20)
    drift = w2_distance_1d(dens[-1], rho0, 400)
    assert drift <= 1e-6
    assert energies[-1] == pytest.approx(energies[0], abs=1e-10)


def test_penalized_flow_tracks_porous_media():
    """Congestion penalty (1/m) rho^m drives the same dynamics as the
    degenerate diffusion it represents (coarse version of the full check)."""
    grid = build_grid((0.0, 2.0), 120)
    D = ScalarField.from_function(grid, lambda x: 0.5 * (x - 1.0) ** 2)
    rho0 = _gaussian(grid, 0.9, 0.35)
    tau = 2e-3
    steps = 20
    cfg = JkoConfig(tau=tau, mode="penalized", m=4.0, n_samples=150)
    dens, _, _ = run_gradient_flow(rho0, D, cfg, steps)
    times = np.arange(steps + 1) * tau
    ref = porous_media_reference(rho0, D, 4.0, horizon=steps * tau,
                                 sample_times=times)
    errs = [float(np.sum(np.abs(dens[k].values - ref[k].values))
                  * grid.cell_volume) for k in range(steps + 1)]
    assert max(errs) <= 0.08


def test_flow_energy_matches_trajectory_report():
    grid = build_grid((0.0, 2.0), 60)
    D = ScalarField.from_function(grid, lambda x: (x - 1.4) ** 2)
    rho0 = _gaussian(grid, 0.8, 0.3)
    cfg = JkoConfig(tau=3e-3, mode="penalized", m=2.0, n_samples=100)
    dens, energies, _ = run_gradient_flow(rho0, D, cfg, 5)
    # the first reported energy is the energy of the initial density
    assert energies[0] == pytest.approx(flow_energy(rho0, D, cfg), abs=1e-12)
    # later entries refer to the internal quantile state; the density-form
    # recomputation agrees up to binning error
    for k in (1, 5):
        assert flow_energy(dens[k], D, cfg) == pytest.approx(
            energies[k], abs=5e-3)
