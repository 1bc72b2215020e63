"""Fixed-point equilibrium solvers: trivial cases, decompositions, deviations."""

import numpy as np
import pytest

from crowdmfg import (CongestionPenalty, DensityField, HjbProblem, MfgSolution,
                      ScalarField, SpaceTimeField, TimeGrid, build_grid,
                      equilibrium_residual, exploitability,
                      fictitious_pressure, hjb_backward, hopf_lax,
                      realized_payoff, solve_mfg_constrained,
                      solve_mfg_penalized, trajectory_best_response,
                      transformed_system_residual, uniqueness_monitor)


def _gaussian(grid, center, width):
    x = grid.centers()
    return DensityField.from_values(grid, np.exp(-((x - center) / width) ** 2),
                                    normalize=True)


def test_uniform_crowd_constant_reward_is_stationary():
    """Uniform density plus constant reward: congestion cost is flat in
    space, so no gradient ever appears and nothing moves."""
    grid = build_grid((0.0, 2.0), 60)
    rho0 = DensityField.uniform(grid)
    term = ScalarField(grid, 1.3 * np.ones(grid.shape))
    tg = TimeGrid(1.0, 30)
    sol = solve_mfg_penalized(rho0, term, CongestionPenalty(2.0), tg, iters=30)
    assert sol.converged
    for k in range(len(sol.rho)):
        drift = float(np.sum(np.abs(sol.rho[k].values - rho0.values))
                      * grid.cell_volume)
        assert drift <= 1e-12


def test_penalized_crowd_drifts_toward_reward():
    grid = build_grid((0.0, 4.0), 80)
    rho0 = _gaussian(grid, 2.0, 1.3)
    term = ScalarField.from_function(grid, lambda x: -0.15 * (x - 2.1) ** 2)
    tg = TimeGrid(0.5, 25)
    sol = solve_mfg_penalized(rho0, term, CongestionPenalty(2.0), tg,
                              iters=80, tol=1e-4)
    assert sol.converged
    x = grid.centers()
    com0 = float(np.sum(x * sol.rho[0].values) * grid.cell_volume)
    comT = float(np.sum(x * sol.rho[-1].values) * grid.cell_volume)
    assert comT > com0 + 0.008
    rep = equilibrium_residual(sol)
    for k in range(len(sol.rho)):
        assert abs(sol.rho[k].mass - 1.0) <= 1e-10
    # the backward defect tracks the fixed-point gap, not machine zero
    assert rep.hjb <= 0.02
    assert rep.fixed_point_increment <= 1e-4


def test_constrained_solution_structure():
    grid = build_grid((0.0, 2.0), 80)
    x = grid.centers()
    rho0 = DensityField.from_values(
        grid, np.where(np.abs(x - 1.0) < 0.5, 1.0, 0.0), normalize=True,
        constrained=True)
    term = ScalarField.from_function(grid, lambda x: -np.abs(x - 1.0))
    tg = TimeGrid(1.0, 60)
    sol = solve_mfg_constrained(rho0, term, tg, iters=30, tol=1e-5)
    from crowdmfg.grids import gradient_values
    # structural identity: velocity = effort - grad pressure on every node
    for k in range(0, len(sol.rho), 15):
        gp = gradient_values(grid, sol.pressure[k].values)
        for a in range(grid.dim):
            lhs = sol.velocity[k].components[a]
            rhs = sol.effort[k].components[a] - gp[a]
            assert np.max(np.abs(lhs - rhs)) <= 1e-12
        assert np.all(sol.rho[k].values <= 1.0 + 1e-6)
        assert sol.pressure[k].values.min() >= -1e-12
    rep = equilibrium_residual(sol)
    assert rep.hjb <= 1e-9
    assert rep.complementarity <= 1e-6
    for k in range(len(sol.rho)):
        assert abs(sol.rho[k].mass - 1.0) <= 1e-10


def test_fictitious_pressure_constant_saturation():
    """rho identically 1 pays congestion rate 1, so the cost-to-go of the
    stand-still strategy is exactly T - t; moving only adds effort."""
    grid = build_grid((0.0, 2.0), 50)
    tg = TimeGrid(1.0, 40)
    ones = SpaceTimeField(tg, [ScalarField(grid, np.ones(grid.shape))
                               for _ in range(tg.steps + 1)])
    dec = fictitious_pressure(ones, 2.0, tg)
    for k in range(len(dec.p_hat)):
        want = tg.horizon - tg.nodes[k]
        assert dec.p_hat[k].values == pytest.approx(
            want * np.ones(grid.shape), abs=1e-10)


def test_fictitious_pressure_vacuum_is_free():
    grid = build_grid((0.0, 2.0), 50)
    tg = TimeGrid(1.0, 40)
    zero = SpaceTimeField(tg, [ScalarField.zeros(grid)
                               for _ in range(tg.steps + 1)])
    dec = fictitious_pressure(zero, 2.0, tg)
    for k in range(len(dec.p_hat)):
        assert np.max(np.abs(dec.p_hat[k].values)) <= 1e-14


def test_transformed_residual_small_on_consistent_pair():
    """phi_hat from the solver and p_hat from its own density approximately
    satisfy the coupled transformed equation."""
    grid = build_grid((0.0, 2.0), 80)
    rho0 = _gaussian(grid, 1.0, 0.3)
    term = ScalarField.from_function(grid, lambda x: -0.3 * (x - 1.2) ** 2)
    tg = TimeGrid(0.6, 48)
    sol = solve_mfg_penalized(rho0, term, CongestionPenalty(2.0), tg,
                              iters=60, tol=1e-8)
    assert sol.converged
    dec = fictitious_pressure(sol.rho, 2.0, tg, phi=sol.phi)
    res = transformed_system_residual(dec.phi_hat, dec.p_hat, tg)
    assert res <= 0.2
    # corrupting p_hat must show up
    bad = SpaceTimeField(tg, [ScalarField(grid, p.values + 0.5 * grid.centers())
                              for p in dec.p_hat])
    assert transformed_system_residual(dec.phi_hat, bad, tg) > 5 * res


def test_best_response_matches_value_function():
    """With no crowd terms the dynamic program reduces to the deterministic
    control problem solved by the Hopf-Lax formula."""
    grid = build_grid((0.0, 2.0), 150)
    term = ScalarField.from_function(grid, lambda x: -np.abs(x - 1.4))
    tg = TimeGrid(1.0, 60)
    for x0 in (0.3, 0.9, 1.7):
        br = trajectory_best_response(x0, 0, term, tg)
        ref = hopf_lax(term, 0.0, tg.horizon)
        want = float(np.interp(x0, grid.centers(), ref.values))
        assert br.payoff == pytest.approx(want, abs=0.05)
        assert not br.bound_active


def test_best_response_stays_put_on_peak():
    grid = build_grid((0.0, 2.0), 100)
    term = ScalarField.from_function(grid, lambda x: -((x - 1.0) ** 2))
    tg = TimeGrid(0.5, 25)
    br = trajectory_best_response(1.0, 0, term, tg)
    assert np.max(np.abs(br.path - 1.0)) <= 0.05
    assert br.payoff == pytest.approx(0.0, abs=5e-3)


def test_exploitability_nonnegative_and_small_when_converged():
    grid = build_grid((0.0, 2.0), 60)
    rho0 = _gaussian(grid, 0.9, 0.3)
    term = ScalarField.from_function(grid, lambda x: -0.2 * (x - 1.1) ** 2)
    tg = TimeGrid(0.5, 30)
    sol = solve_mfg_penalized(rho0, term, CongestionPenalty(2.0), tg,
                              iters=60, tol=1e-8)
    assert sol.converged
    xs = [0.5, 0.9, 1.3]
    gap = exploitability(sol, xs)
    assert gap >= 0.0
    assert gap <= 2e-2
    for x0 in xs:
        br = trajectory_best_response(
            x0, 0, sol.terminal, tg, rho=sol.rho, penalty=sol.penalty)
        # the defining inequality, per sampled agent
        assert gap >= br.payoff - realized_payoff(sol, x0) - 1e-9


def test_uniqueness_monitor_shape_and_endpoints():
    grid = build_grid((0.0, 2.0), 50)
    tg = TimeGrid(0.5, 20)
    term = ScalarField.from_function(grid, lambda x: -0.2 * (x - 1.0) ** 2)
    sol1 = solve_mfg_penalized(_gaussian(grid, 0.8, 0.3), term,
                               CongestionPenalty(2.0), tg, iters=40)
    sol2 = solve_mfg_penalized(_gaussian(grid, 1.2, 0.3), term,
                               CongestionPenalty(2.0), tg, iters=40)
    series, rate = uniqueness_monitor(sol1, sol2)
    assert series.shape == (tg.steps + 1,)
    assert rate.shape == (tg.steps,)
    same, _ = uniqueness_monitor(sol1, sol1)
    assert np.max(np.abs(same)) <= 1e-14


def test_penalty_requires_m_at_least_two():
    with pytest.raises(ValueError):
        CongestionPenalty(1.5)
