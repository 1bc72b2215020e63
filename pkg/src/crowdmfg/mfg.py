"""Fixed-point solvers for crowd motion with congestion.

Both solvers iterate the same skeleton: a backward Hamilton-Jacobi solve for
the value phi of a representative agent, the feedback effort alpha = grad phi,
and a forward continuity solve moving the crowd.  They differ in how crowding
enters:

* penalized: a running cost g(rho) = rho^(m-1) discourages dense regions but
  forbids nothing; agents move exactly at their effort, v = alpha.
* constrained: the density must stay below 1; at every time node the effort is
  projected onto the admissible cone, v = alpha - grad p, and the pressure p
  feeds back into the backward solve as a drift.

Neither fixed point comes with a convergence guarantee, so a non-convergent
run is a first-class result: every solution carries its iteration history and
a residual report that quantifies how far from equilibrium it stopped.  The
trajectories stored in a solution are always self-consistent (the density is
the exact forward solve along the stored velocity, and the velocity is the
exact projected effort), whatever the convergence flag says.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import (
    DensityField,
    FaceVelocityField,
    Grid,
    ScalarField,
    SpaceTimeField,
    TimeGrid,
    gradient,
    gradient_values,
)
from .hjb import HjbProblem, hjb_backward, hjb_residual, optimal_feedback
from .projection import project_velocity
from .transport import solve_continuity, weak_residual

__all__ = [
    "CongestionPenalty",
    "ResidualReport",
    "MfgSolution",
    "solve_mfg_penalized",
    "solve_mfg_constrained",
    "fictitious_pressure",
    "FictitiousDecomposition",
    "trajectory_best_response",
    "BestResponse",
    "realized_payoff",
    "exploitability",
    "equilibrium_residual",
    "uniqueness_monitor",
]


@dataclass(frozen=True)
class CongestionPenalty:
    """Power-law congestion cost g(rho) = rho^(m-1) with primitive rho^m / m."""

    m: float

    def __post_init__(self):
        if not self.m >= 2.0:
            raise ValueError(f"exponent must be >= 2, got {self.m!r}")
        # g must be the derivative of G; catch a mismatched edit with a
        # midpoint quadrature check (third-order accurate, so the relative
        # defect stays ~1e-7 even at large m, against ~1e-1 for a wrong power)
        d = 1e-4
        for r in (0.3, 0.8, 1.2):
            lhs = self.primitive(r + d) - self.primitive(r)
            mid = self.g(r + 0.5 * d) * d
            if abs(lhs - mid) > 1e-4 * (abs(lhs) + 1e-12):
                raise AssertionError("g is not the derivative of the primitive")

    def g(self, rho):
        return np.asarray(rho) ** (self.m - 1.0)

    def primitive(self, rho):
        return np.asarray(rho) ** self.m / self.m


@dataclass
class ResidualReport:
    """Equilibrium-quality metrics of a solution, recomputed from its fields.

    All entries are nonnegative except ``pressure_min``, which is reported
    signed (it should be >= -tolerance).  ``exploitability`` is None until a
    best-response sweep has been run, since it costs a dynamic program per
    sampled starting point.
    """

    hjb: float
    continuity: float
    complementarity: float
    pressure_min: float
    orthogonality: float
    effort_consistency: float
    fixed_point_increment: float
    exploitability: float | None = None

    def to_dict(self) -> dict:
        return {
            "hjb": self.hjb,
            "continuity": self.continuity,
            "complementarity": self.complementarity,
            "pressure_min": self.pressure_min,
            "orthogonality": self.orthogonality,
            "effort_consistency": self.effort_consistency,
            "fixed_point_increment": self.fixed_point_increment,
            "exploitability": self.exploitability,
        }


@dataclass
class MfgSolution:
    """Converged-or-not output of a fixed-point run.

    All trajectories have tg.steps + 1 entries.  Structural identities hold
    exactly by construction: effort = grad(phi) nodewise, velocity = effort
    minus grad(pressure) (with pressure identically zero in penalized mode),
    and rho is the forward continuity solve along velocity.
    """

    mode: str
    rho: SpaceTimeField
    phi: SpaceTimeField
    pressure: SpaceTimeField
    effort: SpaceTimeField
    velocity: SpaceTimeField
    terminal: ScalarField
    tg: TimeGrid
    penalty: CongestionPenalty | None
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list)
    report: ResidualReport | None = None
    note: str = ""


    @property
    def grid(self) -> Grid:
        return self.terminal.grid


def _blend_density(a: DensityField, b: DensityField, delta: float) -> DensityField:
    vals = (1.0 - delta) * a.values + delta * b.values
    out = DensityField.__new__(DensityField)
    out.grid = a.grid
    out.values = vals
    out.constrained = False
    return out


def _sup_l1(traj_a: SpaceTimeField, traj_b: SpaceTimeField) -> float:
    """sup over time of the spatial L1 distance between two trajectories.

    The fixed-point increment lives in this norm: the pointwise sup norm
    would read a one-cell shift of a steep front as an O(1) change, while
    the L1 norm correctly charges it O(h).
    """
    vol = traj_a.grid.cell_volume
    worst = 0.0
    for a, b in zip(traj_a, traj_b):
        worst = max(worst, float(np.sum(np.abs(a.values - b.values))) * vol)
    return worst


def _zero_pressures(tg: TimeGrid, grid: Grid) -> SpaceTimeField:
    return SpaceTimeField(tg, [ScalarField.zeros(grid) for _ in range(tg.steps + 1)])


def solve_mfg_penalized(rho0: DensityField, terminal: ScalarField,
                        penalty: CongestionPenalty, tg: TimeGrid,
                        iters: int = 40, damping: float | None = None,
                        tol: float = 1e-6, cfl_target: float = 0.9) -> MfgSolution:
    """Fictitious-play fixed point for the congestion-penalized system.

    Each round solves the backward equation with running cost g(rho) frozen
    at the current density trajectory, follows the feedback effort forward,
    and averages the new trajectory in with weight delta_k = 1/(k+1) (or a
    fixed ``damping`` if given).  Stops when the sup-norm increment between
    the reference trajectory and its own best response falls below ``tol``.
    """
    grid = rho0.grid
    if terminal.grid != grid:
        raise ValueError("terminal data and density live on different grids")
    rho_ref = SpaceTimeField.constant(tg, rho0)
    history: list[float] = []
    converged = False
    note = ""
    phi = alpha = rho_new = None
    prev_out = None
    for it in range(max(1, iters)):
        try:
            source = SpaceTimeField(tg, [ScalarField(grid, penalty.g(r.values))
                                         for r in rho_ref])
            prob = HjbProblem(terminal, source=source, kind="sup")
            new_phi = hjb_backward(prob, tg, cfl_target)
            new_alpha = optimal_feedback(new_phi)
            new_rho = solve_continuity(rho0, new_alpha, tg, cfl_target)
        except RuntimeError as err:
            # a stiff iterate (spiked density, huge g) can make the backward
            # solve or the transport intractable; the previous pass is still
            # a valid, self-consistent iterate, so return it flagged
            if rho_new is None:
                raise
            note = f"stopped at iteration {it}: {err}"
            break
        phi, alpha, rho_new = new_phi, new_alpha, new_rho
        # movement of successive best-response outputs; comparing against the
        # damped reference instead would decay like 1/k from the averaging
        # alone and never reach a tight tolerance
        inc = _sup_l1(rho_new, prev_out if prev_out is not None else rho_ref)
        history.append(inc)
        if inc <= tol:
            converged = True
            break
        if it == iters - 1:
            break
        prev_out = rho_new
        delta = damping if damping is not None else 1.0 / (it + 2.0)
        rho_ref = SpaceTimeField(tg, [_blend_density(a, b, delta)
                                      for a, b in zip(rho_ref, rho_new)])
    sol = MfgSolution(
        mode="penalized",
        rho=rho_new,
        phi=phi,
        pressure=_zero_pressures(tg, grid),
        effort=alpha,
        velocity=SpaceTimeField(tg, [a.copy() for a in alpha]),
        terminal=terminal,
        tg=tg,
        penalty=penalty,
        converged=converged,
        iterations=len(history),
        history=history,
        note=note,
    )
    sol.report = equilibrium_residual(sol)
    return sol


def _pressure_gradients(p_traj: SpaceTimeField) -> SpaceTimeField:
    return SpaceTimeField(p_traj.tg, [gradient(p) for p in p_traj])


def _forward_sweep(rho0: DensityField, alpha: SpaceTimeField, tg: TimeGrid,
                   p_warm: SpaceTimeField, proj_tol: float, proj_iters: int,
                   cfl_target: float):
    """Project-then-advect forward pass; returns node lists for rho, p, v.

    Projections are warm-started from the previous iterate's pressure at the
    same node, falling back to the previous node within this sweep on a cold
    start, which keeps the Gauss-Seidel sweep counts low once the fixed point
    settles.  The terminal node gets a projection too, so every node satisfies
    v = alpha - grad p for a pressure feasible at that node's density.
    """
    from .transport import advect_step

    grid = rho0.grid
    rhos = [rho0]
    ps: list[ScalarField] = []
    vs: list[FaceVelocityField] = []
    cur = rho0
    prev_p = None
    for k in range(tg.steps + 1):
        warm = p_warm[k].values
        if prev_p is not None and not warm.any():
            warm = prev_p
        res = project_velocity(cur, alpha[k], tol=proj_tol, max_iter=proj_iters,
                               omega=None, p0=warm)
        ps.append(ScalarField(grid, res.p))
        vs.append(res.v)
        prev_p = res.p
        if k < tg.steps:
            cur, _ = advect_step(cur, res.v, tg.dt, cfl_target)
            rhos.append(cur)
    return rhos, ps, vs


def solve_mfg_constrained(rho0: DensityField, terminal: ScalarField, tg: TimeGrid,
                          iters: int = 40, damping: float | None = None,
                          tol: float = 1e-6, cfl_target: float = 0.9,
                          proj_tol: float = 1e-11,
                          proj_iters: int = 50000) -> MfgSolution:
    """Lagged fixed point for the density-constrained system.

    Round structure: solve the backward equation with drift grad(p) frozen at
    the current pressure trajectory; take the effort alpha = grad phi; sweep
    forward, projecting alpha onto the admissible cone of the current density
    at each node and advecting along the projected velocity; then average
    density and pressure toward the sweep's output.  The equilibrium coupling
    is simultaneous in the continuous problem; the lag is what makes the
    discrete iteration well defined, and the residual report measures how
    much self-consistency it costs.

    ``proj_tol`` defaults well below the saturation threshold: the residual
    velocity the inner solver leaves behind erodes saturated cells a little
    every step, and if the accumulated erosion crosses ``EPS_SAT`` the cell
    drops out of the complementarity system, unprojected effort rushes in,
    and the density spikes.  Keeping tol * steps far under the threshold
    prevents that cascade.
    """
    grid = rho0.grid
    if terminal.grid != grid:
        raise ValueError("terminal data and density live on different grids")
    if not rho0.values.max() <= 1.0 + 1e-8:
        raise ValueError("initial density must respect the unit cap")
    rho_ref = SpaceTimeField.constant(tg, rho0)
    p_ref = _zero_pressures(tg, grid)
    history: list[float] = []
    converged = False
    note = ""
    phi = alpha = None
    rhos = ps = vs = None
    prev_rho = prev_p = None
    for it in range(max(1, iters)):
        try:
            prob = HjbProblem(terminal, drift=_pressure_gradients(p_ref), kind="sup")
            new_phi = hjb_backward(prob, tg, cfl_target)
            new_alpha = optimal_feedback(new_phi)
            sweep = _forward_sweep(rho0, new_alpha, tg, p_ref, proj_tol,
                                   proj_iters, cfl_target)
        except RuntimeError as err:
            if rhos is None:
                raise
            note = f"stopped at iteration {it}: {err}"
            break
        phi, alpha = new_phi, new_alpha
        rhos, ps, vs = sweep
        rho_new = SpaceTimeField(tg, rhos)
        p_new = SpaceTimeField(tg, ps)
        # successive-output movement, as in the penalized driver
        inc = max(_sup_l1(rho_new, prev_rho if prev_rho is not None else rho_ref),
                  _sup_l1(p_new, prev_p if prev_p is not None else p_ref))
        history.append(inc)
        if inc <= tol:
            converged = True
            break
        if it == iters - 1:
            break
        prev_rho, prev_p = rho_new, p_new
        delta = damping if damping is not None else 1.0 / (it + 2.0)
        rho_ref = SpaceTimeField(tg, [_blend_density(a, b, delta)
                                      for a, b in zip(rho_ref, rho_new)])
        p_ref = SpaceTimeField(tg, [ScalarField(grid, (1.0 - delta) * a.values
                                                + delta * b.values)
                                    for a, b in zip(p_ref, p_new)])
    sol = MfgSolution(
        mode="constrained",
        rho=SpaceTimeField(tg, rhos),
        phi=phi,
        pressure=SpaceTimeField(tg, ps),
        effort=alpha,
        velocity=SpaceTimeField(tg, vs),
        terminal=terminal,
        tg=tg,
        penalty=None,
        converged=converged,
        iterations=len(history),
        history=history,
        note=note,
    )
    sol.report = equilibrium_residual(sol)
    return sol


@dataclass
class FictitiousDecomposition:
    """Pressure-like potential built from a density trajectory alone.

    ``p_hat`` solves the inf-type backward equation with source rho^(m-1) and
    zero terminal data, so it is the optimal cost-to-go of an agent who pays
    quadratic effort plus the congestion cost and receives nothing at the end.
    Adding it to a penalized value function turns the penalized backward
    equation into the constrained one; ``residual`` measures that identity in
    the discrete setting when a value trajectory was supplied.
    """

    p_hat: SpaceTimeField
    phi_hat: SpaceTimeField | None
    residual: float | None


def _face_to_cell(grid: Grid, comps: list[np.ndarray], axis: int) -> np.ndarray:
    lo = [slice(None)] * grid.dim
    lo[axis] = slice(0, -1)
    hi = [slice(None)] * grid.dim
    hi[axis] = slice(1, None)
    return 0.5 * (comps[axis][tuple(lo)] + comps[axis][tuple(hi)])


def _interior(grid: Grid) -> tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in range(grid.dim))


def transformed_system_residual(phi_hat: SpaceTimeField, p_hat: SpaceTimeField,
                                tg: TimeGrid) -> float:
    """Defect of d_t phi_hat + |grad phi_hat|^2/2 - grad phi_hat . grad p_hat.

    Evaluated with forward time differences and face-averaged gradients at
    the earlier node, on interior cells (the zero boundary faces would bias
    the averages in the wall cells).  The continuous identity is exact; the
    discrete operators do not commute, so this is O(h + dt) on smooth runs.
    """
    grid = phi_hat.grid
    inner = _interior(grid)
    worst = 0.0
    for k in range(len(phi_hat) - 1):
        dphi = (phi_hat[k + 1].values - phi_hat[k].values) / tg.dt
        gphi = gradient_values(grid, phi_hat[k].values)
        gp = gradient_values(grid, p_hat[k].values)
        quad = np.zeros(grid.shape)
        cross = np.zeros(grid.shape)
        for a in range(grid.dim):
            fa = _face_to_cell(grid, gphi, a)
            pa = _face_to_cell(grid, gp, a)
            quad += 0.5 * fa * fa
            cross += fa * pa
        res = dphi + quad - cross
        worst = max(worst, float(np.max(np.abs(res[inner]))))
    return worst


def fictitious_pressure(rho: SpaceTimeField, m: float, tg: TimeGrid,
                        phi: SpaceTimeField | None = None,
                        cfl_target: float = 0.9) -> FictitiousDecomposition:
    """Solve the inf-type backward equation with source rho^(m-1), terminal 0."""
    grid = rho.grid
    src = SpaceTimeField(tg, [ScalarField(grid, r.values ** (m - 1.0))
                              for r in rho])
    prob = HjbProblem(ScalarField.zeros(grid), source=src, kind="inf")
    p_hat = hjb_backward(prob, tg, cfl_target)
    if phi is None:
        return FictitiousDecomposition(p_hat, None, None)
    phi_hat = SpaceTimeField(tg, [ScalarField(grid, a.values + b.values)
                                  for a, b in zip(phi, p_hat)])
    res = transformed_system_residual(phi_hat, p_hat, tg)
    return FictitiousDecomposition(p_hat, phi_hat, res)


@dataclass
class BestResponse:
    """One agent's optimal reply to frozen crowd fields."""

    path: np.ndarray
    controls: np.ndarray
    payoff: float
    bound_active: bool


def _cell_drift(grid: Grid, p_values: np.ndarray) -> np.ndarray:
    gp = gradient_values(grid, p_values)
    return _face_to_cell(grid, gp, 0)


def _traj_entry(traj, k: int):
    if traj is None:
        return None
    return traj[min(k, len(traj) - 1)]


def trajectory_best_response(x0: float, k0: int, terminal: ScalarField,
                             tg: TimeGrid, rho: SpaceTimeField | None = None,
                             penalty: CongestionPenalty | None = None,
                             pressure: SpaceTimeField | None = None,
                             alpha_max: float | None = None,
                             n_controls: int = 41) -> BestResponse:
    """Dynamic-programming best reply of a single agent, 1d.

    Maximizes Phi(y_T) minus quadratic effort (minus the congestion cost
    g(rho) along the way when a penalized environment is given) over
    piecewise-constant controls on a symmetric lattice of ``n_controls``
    speeds up to ``alpha_max``.  In a constrained environment the state
    drifts down the pressure gradient, y' = alpha - grad p(y), and the
    congestion term is absent.  Values between cell centers are linearly
    interpolated; positions are clamped to the walls, matching the no-flux
    dynamics of the crowd.  ``bound_active`` flags an optimal control on the
    lattice edge, which means ``alpha_max`` truncated the search.
    """
    grid = terminal.grid
    if grid.dim != 1:
        raise ValueError("the best-response oracle is 1d only")
    if not 0 <= k0 <= tg.steps:
        raise ValueError(f"start index {k0} outside 0..{tg.steps}")
    xc = grid.centers()
    lo, hi = xc[0], xc[-1]
    dt = tg.dt
    if alpha_max is None:
        alpha_max = 2.0 * (grid.hi[0] - grid.lo[0]) / tg.horizon
    controls = np.linspace(-alpha_max, alpha_max, n_controls)
    effort = 0.5 * controls ** 2

    def run_cost(k):
        if penalty is not None and rho is not None:
            return penalty.g(_traj_entry(rho, k).values)
        return None

    def drift(k):
        if pressure is not None:
            return _cell_drift(grid, _traj_entry(pressure, k).values)
        return None

    # backward value sweep over cell centers, keeping every slice for the
    # rollout; values[k - k0] is the value at node k
    values = [None] * (tg.steps - k0 + 1)
    values[tg.steps - k0] = terminal.values.copy()
    for k in range(tg.steps - 1, k0 - 1, -1):
        d = drift(k)
        g = run_cost(k)
        base = xc if d is None else xc - d * dt
        targets = np.clip(base[None, :] + controls[:, None] * dt, lo, hi)
        cand = np.interp(targets, xc, values[k + 1 - k0]) - effort[:, None] * dt
        V = cand.max(axis=0)
        if g is not None:
            V = V - g * dt
        values[k - k0] = V

    # greedy rollout from the exact starting point, re-optimizing the control
    # at the realized position rather than snapping to the nearest cell
    y = float(np.clip(x0, lo, hi))
    path = [y]
    picks = []
    payoff = 0.0
    bound_active = False
    for k in range(k0, tg.steps):
        d = drift(k)
        g = run_cost(k)
        dv = 0.0 if d is None else float(np.interp(y, xc, d))
        targets = np.clip(y - dv * dt + controls * dt, lo, hi)
        scores = np.interp(targets, xc, values[k + 1 - k0]) - effort * dt
        j = int(np.argmax(scores))
        if j in (0, n_controls - 1):
            bound_active = True
        payoff -= effort[j] * dt
        if g is not None:
            payoff -= float(np.interp(y, xc, g)) * dt
        y = float(targets[j])
        path.append(y)
        picks.append(controls[j])
    payoff += float(np.interp(y, xc, terminal.values))
    return BestResponse(path=np.array(path), controls=np.array(picks),
                        payoff=payoff, bound_active=bound_active)


def realized_payoff(sol: MfgSolution, x0: float, k0: int = 0) -> float:
    """Payoff of an agent who rides the solution's velocity field from x0.

    The control behind the realized motion is the effort alpha = v + grad p
    (equal to v in penalized mode), so that is what the effort cost charges;
    in penalized mode the congestion cost g(rho) accrues along the path.
    """
    grid = sol.grid
    if grid.dim != 1:
        raise ValueError("the payoff rollout is 1d only")
    xc = grid.centers()
    xf = grid.faces()
    lo, hi = xc[0], xc[-1]
    dt = sol.tg.dt
    y = float(np.clip(x0, lo, hi))
    payoff = 0.0
    for k in range(k0, sol.tg.steps):
        a = float(np.interp(y, xf, sol.effort[k].components[0]))
        v = float(np.interp(y, xf, sol.velocity[k].components[0]))
        payoff -= 0.5 * a * a * dt
        if sol.mode == "penalized":
            g = sol.penalty.g(sol.rho[k].values)
            payoff -= float(np.interp(y, xc, g)) * dt
        y = float(np.clip(y + v * dt, lo, hi))
    payoff += float(np.interp(y, xc, sol.terminal.values))
    return payoff


def exploitability(sol: MfgSolution, x0s, alpha_max: float | None = None,
                   n_controls: int = 41) -> float:
    """Worst payoff gain any sampled agent can get by deviating.

    Nonnegative by construction: since following the realized control is one
    admissible strategy, the best response is floored at the realized payoff
    before differencing (the lattice oracle can otherwise undershoot it by a
    discretization sliver).
    """
    if sol.mode == "penalized":
        kw = dict(rho=sol.rho, penalty=sol.penalty)
    else:
        kw = dict(pressure=sol.pressure)
    worst = 0.0
    for x0 in np.atleast_1d(x0s):
        br = trajectory_best_response(float(x0), 0, sol.terminal, sol.tg,
                                      alpha_max=alpha_max,
                                      n_controls=n_controls, **kw)
        real = realized_payoff(sol, float(x0))
        worst = max(worst, max(br.payoff, real) - real)
    return worst


def _test_functions(grid: Grid) -> list[ScalarField]:
    """Deterministic family probing the weak continuity defect: the constant
    (mass drift), each coordinate (momentum), and one smooth bump per axis."""
    fams = [ScalarField(grid, np.ones(grid.shape))]
    meshes = grid.meshes()
    for a in range(grid.dim):
        fams.append(ScalarField(grid, meshes[a].copy()))
        span = grid.hi[a] - grid.lo[a]
        fams.append(ScalarField(
            grid, np.cos(np.pi * (meshes[a] - grid.lo[a]) / span)))
    return fams


def equilibrium_residual(sol: MfgSolution, x0_samples=None,
                         alpha_max: float | None = None,
                         n_controls: int = 41) -> ResidualReport:
    """Recompute every equilibrium metric from the stored trajectories.

    The backward-equation defect is measured against the problem the stored
    density (and pressure) trajectories induce, so it is zero only at a true
    fixed point; en route it tracks the fixed-point gap.  Exploitability is
    filled in only when starting points are supplied.
    """
    grid = sol.grid
    tg = sol.tg
    if sol.mode == "penalized":
        src = SpaceTimeField(tg, [ScalarField(grid, sol.penalty.g(r.values))
                                  for r in sol.rho])
        prob = HjbProblem(sol.terminal, source=src, kind="sup")
    else:
        prob = HjbProblem(sol.terminal, drift=_pressure_gradients(sol.pressure),
                          kind="sup")
    try:
        hjb = hjb_residual(sol.phi, prob, tg)
    except RuntimeError:
        # the stored density induces a problem too stiff to even re-step;
        # that is an unbounded defect, not a crash
        hjb = float("inf")

    cont = max(weak_residual(sol.rho, sol.velocity, psi)
               for psi in _test_functions(grid))

    vol = grid.cell_volume
    comp = 0.0
    pmin = 0.0
    orth = 0.0
    effort_defect = 0.0
    for k in range(tg.steps + 1):
        p = sol.pressure[k].values
        slack = np.maximum(1.0 - sol.rho[k].values, 0.0)
        if k < tg.steps:
            comp += float(np.sum(p * slack)) * vol * tg.dt
        pmin = min(pmin, float(p.min()))
        gp = gradient_values(grid, p)
        pair = 0.0
        for a in range(grid.dim):
            pair += float(np.sum(sol.velocity[k].components[a] * gp[a]))
        orth = max(orth, abs(pair * vol))
        gphi = gradient_values(grid, sol.phi[k].values)
        for a in range(grid.dim):
            effort_defect = max(effort_defect, float(np.max(np.abs(
                sol.effort[k].components[a] - gphi[a]))))

    expl = None
    if x0_samples is not None:
        expl = exploitability(sol, x0_samples, alpha_max, n_controls)
    return ResidualReport(
        hjb=hjb,
        continuity=cont,
        complementarity=comp,
        pressure_min=pmin,
        orthogonality=orth,
        effort_consistency=effort_defect,
        fixed_point_increment=sol.history[-1] if sol.history else 0.0,
        exploitability=expl,
    )


def uniqueness_monitor(sol1: MfgSolution, sol2: MfgSolution) -> tuple[np.ndarray, np.ndarray]:
    """Series I(t_k) = int (phi1 - phi2) d(rho1 - rho2) and its rate.

    The sign of dI/dt is the classical sufficient condition for uniqueness of
    the equilibrium; nothing is asserted here because the condition is not
    known to hold for these systems.  The caller gets the raw series.
    """
    if sol1.grid != sol2.grid or sol1.tg != sol2.tg:
        raise ValueError("solutions live on different grids")
    vol = sol1.grid.cell_volume
    series = np.array([
        float(np.sum((a.values - b.values) * (ra.values - rb.values))) * vol
        for a, b, ra, rb in zip(sol1.phi, sol2.phi, sol1.rho, sol2.rho)
    ])
    rate = np.diff(series) / sol1.tg.dt
    return series, rate
