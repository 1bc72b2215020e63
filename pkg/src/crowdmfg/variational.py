"""Constrained kinetic-energy transport in density/momentum variables.

The crowd's global cost, written in the momentum parameterization q = rho v,
is the integral of |q|^2 / (2 rho) over space-time minus the terminal reward
against the final density.  Minimizing it over pairs (rho, q) that satisfy
the discrete continuity equation, start from rho0, and keep rho in [0, 1]
is a convex saddle problem; ``solve_bb_constrained`` runs a first-order
primal-dual loop on it (Benamou-Brenier style splitting).  The multiplier
of the continuity constraint is a potential chi whose sign structure on the
vacuum / intermediate / saturated regions characterizes optimality; those
residuals are measured by ``check_optimality_conditions``.  The bridge to
the fixed-point solver is chi = phi - p (``chi_from_mfg``).  In 1d the whole
dynamic problem collapses to a static transport problem over the terminal
density alone, solved independently by ``static_reduction_oracle_1d``.

Discretization notes.  Primal unknowns live on time intervals: the density
at nodes 1..Nt (node 0 is pinned to rho0), the momentum on faces per
interval with boundary faces fixed at zero, and a per-face copy of the
density tied to the arithmetic average of its adjacent cells by an explicit
consistency constraint with its own multiplier.  The duplication keeps the
kinetic prox separable per face while the continuity operator stays the
exact adjoint used in the dual ascent.  All duality bookkeeping below is
exact for the discrete problem, so the reported gap is a true optimality
certificate (up to roundoff), not a continuum estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import (
    EPS_SAT,
    DensityField,
    Grid,
    ScalarField,
    SpaceTimeField,
    TimeGrid,
    integrate,
)
from .quantiles import (
    density_to_quantiles,
    project_quantiles_capped,
    quantile_levels,
    quantiles_to_density,
)


def _sl(ndim: int, axis: int, s) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _spatial_axis(arr: np.ndarray, grid: Grid, a: int) -> int:
    # trailing axes of arr are the spatial ones; leading axes (time) pass through
    return arr.ndim - grid.dim + a


def _face_average(grid: Grid, a: int, cells: np.ndarray) -> np.ndarray:
    """Cell values averaged onto axis-a faces, one-sided at the walls."""
    ax = _spatial_axis(cells, grid, a)
    shape = list(cells.shape)
    shape[ax] += 1
    out = np.empty(shape)
    nd = cells.ndim
    out[_sl(nd, ax, slice(1, -1))] = 0.5 * (cells[_sl(nd, ax, slice(None, -1))]
                                            + cells[_sl(nd, ax, slice(1, None))])
    out[_sl(nd, ax, slice(0, 1))] = cells[_sl(nd, ax, slice(0, 1))]
    out[_sl(nd, ax, slice(-1, None))] = cells[_sl(nd, ax, slice(-1, None))]
    return out


def _face_average_adjoint(grid: Grid, a: int, faces: np.ndarray) -> np.ndarray:
    ax = _spatial_axis(faces, grid, a) - 0
    shape = list(faces.shape)
    shape[ax] -= 1
    out = np.zeros(shape)
    nd = faces.ndim
    mid = faces[_sl(nd, ax, slice(1, -1))]
    out[_sl(nd, ax, slice(None, -1))] += 0.5 * mid
    out[_sl(nd, ax, slice(1, None))] += 0.5 * mid
    out[_sl(nd, ax, slice(0, 1))] += faces[_sl(nd, ax, slice(0, 1))]
    out[_sl(nd, ax, slice(-1, None))] += faces[_sl(nd, ax, slice(-1, None))]
    return out


def _grad_stack(grid: Grid, cells: np.ndarray) -> list[np.ndarray]:
    """Face-normal differences of a (possibly time-stacked) cell array, walls zero."""
    out = []
    for a in range(grid.dim):
        ax = _spatial_axis(cells, grid, a)
        shape = list(cells.shape)
        shape[ax] += 1
        g = np.zeros(shape)
        g[_sl(cells.ndim, ax, slice(1, -1))] = np.diff(cells, axis=ax) / grid.h[a]
        out.append(g)
    return out


def _div_stack(grid: Grid, qs: list[np.ndarray]) -> np.ndarray:
    out = None
    for a in range(grid.dim):
        ax = _spatial_axis(qs[a], grid, a)
        d = np.diff(qs[a], axis=ax) / grid.h[a]
        out = d if out is None else out + d
    return out


def _face_weights(grid: Grid, a: int) -> np.ndarray:
    """Dual volume of each axis-a face: a full cell volume inside, half at the walls."""
    w = np.full(grid.face_shape(a), grid.cell_volume)
    nd = w.ndim
    w[_sl(nd, a, slice(0, 1))] *= 0.5
    w[_sl(nd, a, slice(-1, None))] *= 0.5
    return w


def kinetic_density(rho_vals, q_vals) -> np.ndarray:
    """Elementwise |q|^2 / (2 rho), closed at rho = 0.

    Returns 0 where q = 0 = rho and +inf where q != 0 but rho = 0; with that
    convention the map is jointly convex and lower semicontinuous.
    """
    r, w = np.broadcast_arrays(np.asarray(rho_vals, float), np.asarray(q_vals, float))
    out = np.zeros(r.shape)
    pos = r > 0
    out[pos] = w[pos] ** 2 / (2.0 * r[pos])
    out[(~pos) & (w != 0)] = np.inf
    return out


def kinetic_energy(rho: SpaceTimeField, q) -> float:
    """Accumulated kinetic cost of a density/momentum trajectory.

    ``rho`` has one entry per time node; ``q`` has one entry per interval,
    each a FaceVelocityField or a per-axis list of face arrays, paired with
    the density at the interval's right node.  Per face the density is the
    arithmetic average of the adjacent cells and the quadrature weight is
    the face dual volume, so a uniformly saturated crowd moving at constant
    momentum c scores exactly c^2/2 * |domain| * horizon.
    """
    grid = rho.grid
    dt = rho.tg.dt
    if len(q) != len(rho) - 1:
        raise ValueError(f"need one momentum entry per interval: {len(q)} vs {len(rho) - 1}")
    total = 0.0
    for k, qk in enumerate(q):
        comps = getattr(qk, "components", qk)
        rvals = rho[k + 1].values
        for a in range(grid.dim):
            b = kinetic_density(_face_average(grid, a, rvals), comps[a])
            if np.any(np.isinf(b)):
                return math.inf
            total += dt * float(np.sum(_face_weights(grid, a) * b))
    return total


@dataclass
class BbIterate:
    """Final state of the primal-dual loop on the momentum formulation.

    ``primal`` is the Lagrangian value at the current multipliers, which
    upper-bounds ``dual`` by construction even while the iterate is still
    slightly continuity-infeasible; ``objective`` is the plain kinetic cost
    minus terminal reward of the iterate, with the kinetic term read off its
    face-density copies.  The two coincide as the feasibility residual
    vanishes.  ``chi`` carries the continuity
    multiplier per interval, with the node-0 entry repeating the first
    interval.  ``history`` holds one (primal, dual, gap, feasibility) row
    per iteration.
    """

    rho: SpaceTimeField
    q: list
    chi: SpaceTimeField
    primal: float
    dual: float
    gap: float
    objective: float
    feasibility: float
    iterations: int
    converged: bool
    norm_k: float
    sigma: float
    tau: float
    history: list = field(default_factory=list)

    @property
    def grid(self) -> Grid:
        return self.rho.grid


def _bb_prox(r_t: np.ndarray, w_t: np.ndarray, lam: np.ndarray, tau: float,
             tol: float = 1e-12, max_iter: int = 50):
    """Joint prox of lam * B(r, w) plus the box [0, 1] on r, elementwise.

    Minimizing lam w^2/(2r) + ((r - r_t)^2 + (w - w_t)^2)/(2 tau) over w
    first gives w = r w_t / (r + lam tau); the remaining scalar problem in r
    is strictly convex and its stationarity condition

        (r - r_t) (r + lam tau)^2 = tau lam w_t^2 / 2

    has a unique root right of max(0, r_t), found by bisection-safeguarded
    Newton, then clipped into the box.  A zero momentum input short-circuits
    to a plain clip.
    """
    c = 0.5 * tau * lam * w_t * w_t
    lt = lam * tau
    lo = np.maximum(r_t, 0.0)
    hi = lo + c / (lo + lt) ** 2
    r = 0.5 * (lo + hi)
    for _ in range(max_iter):
        g = (r - r_t) * (r + lt) ** 2 - c
        hi = np.where(g > 0, r, hi)
        lo = np.where(g <= 0, r, lo)
        dg = (r + lt) * (3.0 * r + lt - 2.0 * r_t)
        safe = np.where(dg > 0, dg, 1.0)
        rn = r - g / safe
        bad = (dg <= 0) | (rn < lo) | (rn > hi) | ~np.isfinite(rn)
        r = np.where(bad, 0.5 * (lo + hi), rn)
        if float(np.max(hi - lo)) < tol:
            break
    r = np.clip(r, 0.0, 1.0)
    w = r * w_t / (r + lt)
    return r, w


def _apply_k(grid: Grid, dt: float, rho: np.ndarray, rf: list, q: list,
             rho0_vals: np.ndarray | None):
    """Constraint operator: continuity rows (scaled by dt) and consistency rows.

    The physical continuity residual is cont / dt.  Scaling the rows keeps
    the operator norm O(1) instead of O(1/dt), which is what lets the
    scalar step sizes stay large; the multiplier absorbs the factor.
    """
    cont = np.empty_like(rho)
    cont[0] = rho[0]
    if rho0_vals is not None:
        cont[0] -= rho0_vals
    cont[1:] = rho[1:] - rho[:-1]
    cont += dt * _div_stack(grid, q)
    cons = [rf[a] - _face_average(grid, a, rho) for a in range(grid.dim)]
    return cont, cons


def _apply_kt(grid: Grid, dt: float, chi: np.ndarray, mu: list):
    krho = chi.copy()
    krho[:-1] -= chi[1:]
    for a in range(grid.dim):
        krho -= _face_average_adjoint(grid, a, mu[a])
    grads = _grad_stack(grid, chi)
    kq = [-dt * g for g in grads]
    krf = [m.copy() for m in mu]
    return krho, krf, kq


def _operator_norm(grid: Grid, nt: int, dt: float, iters: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    rho = rng.standard_normal((nt,) + grid.shape)
    rf = [rng.standard_normal((nt,) + grid.face_shape(a)) for a in range(grid.dim)]
    q = [rng.standard_normal((nt,) + grid.face_shape(a)) for a in range(grid.dim)]
    lam = 1.0
    for _ in range(iters):
        cont, cons = _apply_k(grid, dt, rho, rf, q, None)
        rho, rf, q = _apply_kt(grid, dt, cont, cons)
        lam = math.sqrt(float(np.sum(rho * rho))
                        + sum(float(np.sum(c * c)) for c in rf)
                        + sum(float(np.sum(c * c)) for c in q))
        rho /= lam
        rf = [c / lam for c in rf]
        q = [c / lam for c in q]
    # power iteration approaches the top eigenvalue from below; pad the estimate
    return 1.02 * math.sqrt(lam)


def _kinetic_sum(lam: list, rf: list, q: list) -> float:
    total = 0.0
    for a in range(len(lam)):
        b = kinetic_density(rf[a], q[a])
        if np.any(np.isinf(b)):
            return math.inf
        total += float(np.sum(lam[a] * b))
    return total


def solve_bb_constrained(rho0: DensityField, terminal: ScalarField, tg: TimeGrid,
                         iterations: int = 5000, sigma: float | None = None,
                         tau: float | None = None, gap_tol: float | None = None,
                         chi_init: SpaceTimeField | None = None,
                         power_iters: int = 80, seed: int = 0) -> BbIterate:
    """Minimize kinetic cost minus terminal reward under the density cap.

    Primal-dual iteration: an ascent step on the multipliers (chi for
    continuity, mu for cell-face consistency) applied to the extrapolated
    primal point, then the proximal descent step, with the kinetic prox
    solved per face by safeguarded Newton.  Step sizes default to
    0.99/||K|| each, where ||K|| is the power-iteration estimate of the
    constraint operator norm; explicitly supplied steps are rejected unless
    sigma * tau * ||K||^2 < 1.

    The continuity multiplier is warm-started from ``chi_init`` (node
    entries, read at each interval's right node) or, by default, from the
    terminal reward broadcast backward; the consistency multiplier starts
    at the matching value |grad chi|^2 / 2.  The default makes a constant
    reward an exact fixed point, and passing the evolved potential of the
    reward cuts the plain-iteration tail by orders of magnitude on
    transport-dominated instances.

    The reported primal value is the Lagrangian at the current multipliers,
    so primal >= dual holds at every iteration up to roundoff and the gap
    is a genuine optimality certificate.  A gap growing past ten times its
    initial scale aborts with a RuntimeError.
    """
    grid = rho0.grid
    if terminal.grid is not grid and terminal.grid.shape != grid.shape:
        raise ValueError("terminal reward lives on a different grid")
    if float(rho0.values.max()) > 1.0 + 1e-8:
        raise ValueError(f"initial density violates the cap: max {rho0.values.max():.6f}")
    if iterations < 1:
        raise ValueError("need at least one iteration")
    nt = tg.steps
    dt = tg.dt
    vol = grid.cell_volume
    phi_vals = terminal.values
    rho0_vals = rho0.values

    norm_k = _operator_norm(grid, nt, dt, power_iters, seed)
    if sigma is None and tau is None:
        sigma = tau = 0.99 / norm_k
    elif sigma is None:
        sigma = 0.98 / (tau * norm_k * norm_k)
    elif tau is None:
        tau = 0.98 / (sigma * norm_k * norm_k)
    if sigma <= 0 or tau <= 0 or sigma * tau * norm_k * norm_k >= 1.0:
        raise ValueError(
            f"step sizes violate sigma*tau*||K||^2 < 1: "
            f"{sigma:.3e} * {tau:.3e} * {norm_k:.3e}^2 = {sigma * tau * norm_k ** 2:.3f}"
        )

    wf = [_face_weights(grid, a) for a in range(grid.dim)]
    lam = [dt * w for w in wf]

    rho = np.repeat(rho0_vals[None], nt, axis=0)
    rf = [_face_average(grid, a, rho) for a in range(grid.dim)]
    q = [np.zeros((nt,) + grid.face_shape(a)) for a in range(grid.dim)]
    if chi_init is None:
        chi = np.repeat((vol * phi_vals)[None], nt, axis=0)
    else:
        if len(chi_init) != nt + 1:
            raise ValueError("chi_init needs one entry per time node")
        chi = vol * np.stack([chi_init[k + 1].values for k in range(nt)])
    grads0 = _grad_stack(grid, chi)
    mu = [dt * grads0[a] ** 2 / (2.0 * wf[a]) for a in range(grid.dim)]
    rho_b, rf_b, q_b = rho.copy(), [c.copy() for c in rf], [c.copy() for c in q]

    def metrics():
        cont, cons = _apply_k(grid, dt, rho, rf, q, rho0_vals)
        lag = _kinetic_sum(lam, rf, q)
        lag -= vol * float(np.sum(phi_vals * rho[-1]))
        lag += float(np.sum(chi * cont))
        lag += sum(float(np.sum(mu[a] * cons[a])) for a in range(grid.dim))
        coef = chi.copy()
        coef[:-1] -= chi[1:]
        coef[-1] -= vol * phi_vals
        for a in range(grid.dim):
            coef -= _face_average_adjoint(grid, a, mu[a])
        dual = -float(np.sum(chi[0] * rho0_vals))
        dual += float(np.sum(np.minimum(coef, 0.0)))
        grads = _grad_stack(grid, chi)
        for a in range(grid.dim):
            dual += float(np.sum(np.minimum(
                mu[a] - dt * grads[a] ** 2 / (2.0 * wf[a]), 0.0)))
        feas = vol * float(np.sum(np.abs(cont)))
        feas += sum(dt * float(np.sum(wf[a] * np.abs(cons[a]))) for a in range(grid.dim))
        return lag, dual, lag - dual, feas

    history = []
    gap_ref = None
    converged = False
    performed = 0
    for it in range(iterations):
        cont_b, cons_b = _apply_k(grid, dt, rho_b, rf_b, q_b, rho0_vals)
        chi += sigma * cont_b
        for a in range(grid.dim):
            mu[a] += sigma * cons_b[a]
        krho, krf, kq = _apply_kt(grid, dt, chi, mu)
        r_in = rho - tau * krho
        r_in[-1] += tau * vol * phi_vals
        rho_new = np.clip(r_in, 0.0, 1.0)
        rf_new, q_new = [], []
        for a in range(grid.dim):
            rfa, qa = _bb_prox(rf[a] - tau * krf[a], q[a] - tau * kq[a], lam[a], tau)
            rf_new.append(rfa)
            q_new.append(qa)
        rho_b = 2.0 * rho_new - rho
        rf_b = [2.0 * n - o for n, o in zip(rf_new, rf)]
        q_b = [2.0 * n - o for n, o in zip(q_new, q)]
        rho, rf, q = rho_new, rf_new, q_new

        primal, dual, gap, feas = metrics()
        history.append((primal, dual, gap, feas))
        performed = it + 1
        if gap_ref is None:
            gap_ref = max(gap, 1e-6 * (1.0 + abs(primal) + abs(dual)))
        elif it >= 20 and gap > 10.0 * gap_ref:
            raise RuntimeError(
                f"primal-dual iteration diverging: gap {gap:.3e} at iteration {it} "
                f"exceeds 10x the initial scale {gap_ref:.3e} (feasibility {feas:.3e})"
            )
        if gap_tol is not None and gap <= gap_tol:
            converged = True
            break

    primal, dual, gap, feas = history[-1]
    rho_entries = [ScalarField(grid, rho0_vals.copy())]
    rho_entries += [ScalarField(grid, rho[k].copy()) for k in range(nt)]
    chi_phys = chi / vol
    chi_entries = [ScalarField(grid, chi_phys[0].copy())]
    chi_entries += [ScalarField(grid, chi_phys[k].copy()) for k in range(nt)]
    q_out = [[q[a][k].copy() for a in range(grid.dim)] for k in range(nt)]
    rho_traj = SpaceTimeField(tg, rho_entries)
    # the iterate's own face densities keep the kinetic term finite; averaging
    # the cell densities instead can hit exact vacuum under stray momentum
    objective = _kinetic_sum(lam, rf, q) - vol * float(np.sum(phi_vals * rho[-1]))
    return BbIterate(
        rho=rho_traj,
        q=q_out,
        chi=SpaceTimeField(tg, chi_entries),
        primal=primal,
        dual=dual,
        gap=gap,
        objective=objective,
        feasibility=feas,
        iterations=performed,
        converged=converged,
        norm_k=norm_k,
        sigma=sigma,
        tau=tau,
        history=history,
    )


def _half_grad_sq_cells(grid: Grid, vals: np.ndarray) -> np.ndarray:
    """Cell collocation of |grad chi|^2 / 2 from face differences."""
    out = np.zeros(vals.shape)
    for a, g in enumerate(_grad_stack(grid, vals)):
        out += _face_average_adjoint(grid, a, 0.5 * g * g)
    return out


@dataclass
class OptimalityResiduals:
    """Measure-weighted violations of the saddle-point sign conditions.

    The running residual r = dt(chi) + |grad chi|^2 / 2 must be <= 0 where
    the crowd is absent, >= 0 where it is saturated, and 0 in between; at
    the final time chi - terminal obeys the mirrored signs.  Each field
    integrates the violating part over its region (dx dt for the running
    conditions, dx for the terminal ones).
    """

    vacuum_excess: float
    saturated_deficit: float
    intermediate_mismatch: float
    terminal_vacuum_deficit: float
    terminal_saturated_excess: float
    terminal_intermediate_mismatch: float

    def max_violation(self) -> float:
        return max(self.vacuum_excess, self.saturated_deficit,
                   self.intermediate_mismatch, self.terminal_vacuum_deficit,
                   self.terminal_saturated_excess, self.terminal_intermediate_mismatch)


def check_optimality_conditions(it: BbIterate, terminal: ScalarField,
                                eps: float = EPS_SAT) -> OptimalityResiduals:
    """Evaluate the six sign conditions on a (near-)optimal iterate.

    Regions are cut from the density trajectory at threshold ``eps``; the
    running residual is formed with the forward time difference and the
    face-averaged square gradient, skipping the first interval pair (the
    node-0 multiplier entry duplicates it).
    """
    grid = it.grid
    tg = it.rho.tg
    dt = tg.dt
    vol = grid.cell_volume
    nt = tg.steps
    vac_hi = sat_lo = mid_abs = 0.0
    for k in range(1, nt):
        chi_k = it.chi[k].values
        r = (it.chi[k + 1].values - chi_k) / dt + _half_grad_sq_cells(grid, chi_k)
        rho_k = it.rho[k].values
        low = rho_k <= eps
        high = rho_k >= 1.0 - eps
        mid = ~(low | high)
        vac_hi += vol * dt * float(np.sum(np.maximum(r[low], 0.0)))
        sat_lo += vol * dt * float(np.sum(np.maximum(-r[high], 0.0)))
        mid_abs += vol * dt * float(np.sum(np.abs(r[mid])))
    s = it.chi[nt].values - terminal.values
    rho_t = it.rho[nt].values
    low = rho_t <= eps
    high = rho_t >= 1.0 - eps
    mid = ~(low | high)
    return OptimalityResiduals(
        vacuum_excess=vac_hi,
        saturated_deficit=sat_lo,
        intermediate_mismatch=mid_abs,
        terminal_vacuum_deficit=vol * float(np.sum(np.maximum(-s[low], 0.0))),
        terminal_saturated_excess=vol * float(np.sum(np.maximum(s[high], 0.0))),
        terminal_intermediate_mismatch=vol * float(np.sum(np.abs(s[mid]))),
    )


def effort_consistency(it: BbIterate) -> float:
    """Space-time L1 defect of the optimal-flow relation q = rho grad chi.

    Each interval's momentum is compared against the density at the
    interval's right node (the kinetic collocation point) times the face
    gradient of chi there, weighted by face dual volumes and dt.
    """
    grid = it.grid
    tg = it.rho.tg
    total = 0.0
    for k in range(1, tg.steps + 1):
        grads = _grad_stack(grid, it.chi[k].values)
        rho_k = it.rho[k].values
        for a in range(grid.dim):
            wf = _face_weights(grid, a)
            ra = _face_average(grid, a, rho_k)
            total += tg.dt * float(np.sum(wf * np.abs(it.q[k - 1][a] - ra * grads[a])))
    return total


@dataclass
class ChiLink:
    """The candidate optimality potential chi = phi - p of a fixed-point run.

    ``identity_gap`` is the sup over space-time of the defect between
    dt(chi) + |grad chi|^2/2 and -dt(p) + |grad p|^2/2, which agree exactly
    in the continuum whenever phi solves its backward equation; discretely
    the defect equals the central-form residual of phi.  The two region
    integrals probe the sign of the pressure side where the constraint
    binds, and ``terminal_identity`` checks (chi_T - terminal) = -p_T,
    which is algebraically exact.
    """

    chi: SpaceTimeField
    identity_gap: float
    saturated_deficit: float
    intermediate_mismatch: float
    terminal_identity: float
    pressure_residual: list


def chi_from_mfg(sol) -> ChiLink:
    """Build chi = phi - p from a constrained solution and audit its signs."""
    grid = sol.grid
    tg = sol.tg
    dt = tg.dt
    vol = grid.cell_volume
    nt = tg.steps
    chi_entries = [ScalarField(grid, sol.phi[k].values - sol.pressure[k].values)
                   for k in range(nt + 1)]
    gap = 0.0
    sat_lo = mid_abs = 0.0
    rhs_slices = []
    for k in range(nt):
        c_k = chi_entries[k].values
        p_k = sol.pressure[k].values
        lhs = (chi_entries[k + 1].values - c_k) / dt + _half_grad_sq_cells(grid, c_k)
        rhs = -(sol.pressure[k + 1].values - p_k) / dt + _half_grad_sq_cells(grid, p_k)
        gap = max(gap, float(np.max(np.abs(lhs - rhs))))
        rho_k = sol.rho[k].values
        high = rho_k >= 1.0 - EPS_SAT
        mid = (rho_k > EPS_SAT) & ~high
        sat_lo += vol * dt * float(np.sum(np.maximum(-rhs[high], 0.0)))
        mid_abs += vol * dt * float(np.sum(np.abs(rhs[mid])))
        rhs_slices.append(ScalarField(grid, rhs))
    term = chi_entries[nt].values - sol.terminal.values + sol.pressure[nt].values
    return ChiLink(
        chi=SpaceTimeField(tg, chi_entries),
        identity_gap=gap,
        saturated_deficit=sat_lo,
        intermediate_mismatch=mid_abs,
        terminal_identity=float(np.max(np.abs(term))),
        pressure_residual=rhs_slices,
    )


@dataclass
class StaticReduction:
    """One convention's solution of the terminal-density problem."""

    coefficient: float
    value: float
    transport_cost: float
    terminal_gain: float
    rho_t: DensityField
    quantiles: np.ndarray


@dataclass
class StaticReductionPair:
    """Both time-coefficient conventions for the static problem.

    The objective is c(T) W2^2(rho0, rho_T) - integral of the terminal
    reward against rho_T, over capped terminal densities.  ``linear`` takes
    c(T) = T; ``geodesic`` takes c(T) = 1/(2T), the kinetic energy of the
    constant-speed displacement over horizon T, which is the scale that
    matches the dynamic momentum formulation.  The two differ by the factor
    2 T^2 on the transport term; both are reported rather than picking one.
    """

    linear: StaticReduction
    geodesic: StaticReduction


def _pg_minimize(q0: np.ndarray, coeff: float, phi_of, dphi_of,
                 lo: float, hi: float, iters: int) -> np.ndarray:
    ds = 1.0 / len(q0)
    q = project_quantiles_capped(q0, lo, hi)

    def value(v):
        return coeff * float(np.sum((v - q0) ** 2)) * ds - float(np.sum(phi_of(v))) * ds

    def grad(v):
        return ds * (2.0 * coeff * (v - q0) - dphi_of(v))

    step = 1.0 / (ds * (2.0 * coeff + 1.0))
    f = value(q)
    for _ in range(iters):
        g = grad(q)
        for _ in range(60):
            y = project_quantiles_capped(q - step * g, lo, hi)
            d = y - q
            fy = value(y)
            if fy <= f + float(np.dot(g, d)) + float(np.dot(d, d)) / (2.0 * step) + 1e-15:
                break
            step *= 0.5
        move = float(np.max(np.abs(y - q)))
        q, f = y, fy
        step *= 1.2
        if move < 1e-13:
            break
    return q


def static_reduction_oracle_1d(rho0: DensityField, terminal: ScalarField,
                               horizon: float, n_samples: int = 400,
                               iters: int = 4000) -> StaticReductionPair:
    """Solve the 1d terminal-density problem by projected gradient on quantiles.

    The terminal density is parameterized by its quantile samples; the cap
    rho <= 1 becomes a minimum-spacing constraint with an exact projection
    (isotonic regression plus a box).  The squared transport distance is the
    quantile L2 distance, and the reward is read through the piecewise
    linear interpolant of the terminal field, so the objective is exactly
    the one a brute-force search over discretized quantile vectors sees.
    """
    grid = rho0.grid
    if grid.dim != 1:
        raise ValueError("static reduction oracle is 1d only")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    centers = grid.centers(0)
    vals = terminal.values
    h = grid.h[0]
    slopes = np.diff(vals) / h

    def phi_of(x):
        return np.interp(x, centers, vals)

    def dphi_of(x):
        idx = np.clip(np.searchsorted(centers, x) - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        return np.where((x < centers[0]) | (x > centers[-1]), 0.0, out)

    q0 = density_to_quantiles(rho0, n_samples)
    ds = 1.0 / n_samples
    results = {}
    for key, coeff in (("linear", horizon), ("geodesic", 1.0 / (2.0 * horizon))):
        q = _pg_minimize(q0, coeff, phi_of, dphi_of, grid.lo[0], grid.hi[0], iters)
        tc = float(np.sum((q - q0) ** 2)) * ds
        gain = float(np.sum(phi_of(q))) * ds
        results[key] = StaticReduction(
            coefficient=coeff,
            value=coeff * tc - gain,
            transport_cost=tc,
            terminal_gain=gain,
            rho_t=quantiles_to_density(q, grid),
            quantiles=q,
        )
    return StaticReductionPair(linear=results["linear"], geodesic=results["geodesic"])
