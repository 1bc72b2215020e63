"""Backward Hamilton-Jacobi solvers for quadratic Hamiltonians.

Two orientations of the same first-order monotone scheme:

  sup:   dphi/dt + |grad phi|^2/2 - b . grad phi - c = 0,   phi(T) given
  inf:  -dphi/dt + |grad phi|^2/2 - b . grad phi - c = 0,   phi(T) given

The sup form is the value function of reward maximization (terminal reward
Phi, running cost |alpha|^2/2 + c, kinematics alpha - b); the inf form with
terminal 0 and c = rho^(m-1) is the congestion shadow cost
inf int (|alpha|^2/2 + rho^(m-1)).  The two are exact mirrors:
inf(Phi, b, c) = -sup(-Phi, b flipped, c), and the code keeps the two update
formulas term-for-term conjugate so the identity holds to rounding.

Space discretization: local Lax-Friedrichs on the quadratic term with the
dissipation coefficient taken from the one-sided differences themselves,
plus directional upwinding of the drift term.  Folding the drift into one
combined dissipation coefficient (sharper where the slope rides the drift)
was tried and rejected: with near-zero dissipation the drifted solve tracks
the viscosity solution of the frozen-drift equation, which in congested
regions rides the outward pressure drift and selects a different weak
branch than the equilibrium construction; the upwind drift dissipation is
what keeps the scheme on the equilibrium branch.  One-sided differences at
the
walls are the two adjacent entries of the discrete `gradient`, whose
boundary faces are zero: the state cannot leave, so no exterior values are
ever invented.  Each backward interval substeps adaptively so the monotone
CFL condition holds for every executed substep; this makes the comparison
principle hold discretely, not just in the limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import (
    FaceVelocityField,
    Grid,
    ScalarField,
    SpaceTimeField,
    TimeGrid,
    gradient,
    gradient_values,
)

__all__ = [
    "HjbProblem",
    "hjb_backward",
    "hopf_lax",
    "optimal_feedback",
    "hjb_residual",
]


@dataclass
class HjbProblem:
    """Terminal data plus optional drift / source trajectories.

    ``drift`` and ``source`` may each be None, a single field (held constant
    in time), or a SpaceTimeField whose entry k is used on [t_k, t_{k+1}].
    ``kind`` selects the sup or inf orientation.
    """

    terminal: ScalarField
    drift: SpaceTimeField | FaceVelocityField | None = None
    source: SpaceTimeField | ScalarField | None = None
    kind: str = "sup"

    def __post_init__(self):
        if self.kind not in ("sup", "inf"):
            raise ValueError(f"kind must be 'sup' or 'inf', got {self.kind!r}")

    def drift_at(self, k: int) -> FaceVelocityField | None:
        return _entry(self.drift, k)

    def source_at(self, k: int) -> ScalarField | None:
        return _entry(self.source, k)


def _entry(obj, k: int):
    if obj is None:
        return None
    if isinstance(obj, SpaceTimeField):
        return obj[min(k, len(obj) - 1)]
    return obj


def _cell_faces(nd: int, axis: int):
    """Left/right face slices seen from cells, for a face-shaped array."""
    lo = [slice(None)] * nd
    lo[axis] = slice(0, -1)
    hi = [slice(None)] * nd
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def _substep(grid: Grid, phi: np.ndarray, b: FaceVelocityField | None,
             c: np.ndarray | None, kind: str, remaining: float,
             cfl_target: float) -> tuple[np.ndarray, float]:
    """One monotone substep of size <= remaining; returns (new phi, size used)."""
    nd = grid.dim
    grads = gradient_values(grid, phi)
    ham = np.zeros(grid.shape)
    rate = np.zeros(grid.shape)
    for a in range(nd):
        lo, hi = _cell_faces(nd, a)
        pm = grads[a][lo]   # backward difference at each cell (0 at the wall)
        pp = grads[a][hi]   # forward difference
        pbar = 0.5 * (pm + pp)
        sigma = np.maximum(np.abs(pm), np.abs(pp))
        if b is not None:
            bl = b.components[a][lo]
            br = b.components[a][hi]
        else:
            bl = br = None
        if kind == "sup":
            ham += 0.5 * pbar * pbar + 0.5 * sigma * (pp - pm)
            if bl is not None:
                ham -= np.maximum(bl, 0.0) * pm + np.minimum(br, 0.0) * pp
                rate += (sigma + np.maximum(bl, 0.0) - np.minimum(br, 0.0)) / grid.h[a]
            else:
                rate += sigma / grid.h[a]
        else:
            ham += 0.5 * pbar * pbar - 0.5 * sigma * (pp - pm)
            if bl is not None:
                ham -= np.minimum(bl, 0.0) * pm + np.maximum(br, 0.0) * pp
                rate += (sigma + np.maximum(br, 0.0) - np.minimum(bl, 0.0)) / grid.h[a]
            else:
                rate += sigma / grid.h[a]
    if c is not None:
        ham -= c
    rmax = float(rate.max())
    if rmax > 0:
        s = min(remaining, cfl_target / rmax)
    else:
        s = remaining
    if kind == "sup":
        return phi + s * ham, s
    return phi - s * ham, s


def _interval(grid: Grid, phi_next: np.ndarray, b, c, kind: str, dt: float,
              cfl_target: float, blowup: float,
              max_substeps: int = 10000) -> np.ndarray:
    """Integrate one backward interval of length dt with adaptive substeps."""
    cvals = c.values if c is not None else None
    phi = phi_next
    remaining = dt
    min_step = dt * 1e-10
    taken = 0
    while remaining > 0:
        phi, s = _substep(grid, phi, b, cvals, kind, remaining, cfl_target)
        taken += 1
        m = float(np.max(np.abs(phi)))
        if not np.isfinite(m) or m > blowup:
            raise RuntimeError(
                f"backward solve blew up: max |phi| = {m:.3e} exceeds {blowup:.1e}"
            )
        if s < min_step:
            raise RuntimeError(
                f"backward solve stalled: substep {s:.3e} below {min_step:.3e} "
                "(gradients too steep for this grid)"
            )
        if taken > max_substeps and remaining > s:
            raise RuntimeError(
                f"backward solve too stiff: interval needs over {max_substeps} "
                f"monotone substeps (substep {s:.3e} of dt {dt:.3e})"
            )
        remaining -= s
    return phi


def hjb_backward(prob: HjbProblem, tg: TimeGrid, cfl_target: float = 0.9,
                 blowup: float | None = None,
                 max_substeps: int = 10000) -> SpaceTimeField:
    """Solve backward from phi(T) = terminal; returns all tg.steps+1 nodes.

    Monotone in the terminal data: enlarging Phi (or the drift-free source)
    nodewise can only enlarge the sup-type solution, which is the discrete
    comparison principle.
    """
    grid = prob.terminal.grid
    if blowup is None:
        blowup = 1e6 * max(1.0, float(np.max(np.abs(prob.terminal.values))))
    phis = [None] * (tg.steps + 1)
    phis[tg.steps] = prob.terminal.copy()
    cur = prob.terminal.values
    for k in range(tg.steps - 1, -1, -1):
        cur = _interval(grid, cur, prob.drift_at(k), prob.source_at(k),
                        prob.kind, tg.dt, cfl_target, blowup, max_substeps)
        phis[k] = ScalarField(grid, cur)
    return SpaceTimeField(tg, phis)


def hjb_residual(phi_traj: SpaceTimeField, prob: HjbProblem, tg: TimeGrid,
                 cfl_target: float = 0.9, blowup: float = 1e8,
                 max_substeps: int = 10000) -> float:
    """Scheme defect of a trajectory: re-run each interval and compare.

    max over k of ||phi_k - interval(phi_{k+1})||_inf / dt.  Zero (to
    rounding) when phi came from `hjb_backward` on the same problem; O(h+dt)
    for any other consistent approximation of the same equation, e.g. a
    Hopf-Lax evaluation on smooth data.
    """
    grid = phi_traj.grid
    worst = 0.0
    for k in range(len(phi_traj) - 1):
        stepped = _interval(grid, phi_traj[k + 1].values, prob.drift_at(k),
                            prob.source_at(k), prob.kind, tg.dt, cfl_target,
                            blowup, max_substeps)
        worst = max(worst, float(np.max(np.abs(phi_traj[k].values - stepped))) / tg.dt)
    return worst


def hopf_lax(terminal: ScalarField, t: float, horizon: float) -> ScalarField:
    """Hopf-Lax value at time t: max over grid nodes y of Phi(y) - |x-y|^2 / (2(T-t)).

    Exact solution operator for the drift- and source-free sup equation,
    discretized by restricting the maximization to cell centers.  Used as an
    independent reference for the marching solver.
    """
    s = horizon - t
    if s < 0:
        raise ValueError("need t <= horizon")
    if s == 0:
        return terminal.copy()
    grid = terminal.grid
    pts = np.stack([m.ravel() for m in grid.meshes()], axis=1)   # (N, dim)
    vals = terminal.values.ravel()
    # pairwise squared distances, (N, N); fine at the grid sizes used here
    d2 = np.zeros((pts.shape[0], pts.shape[0]))
    for a in range(grid.dim):
        diff = pts[:, a][:, None] - pts[:, a][None, :]
        d2 += diff * diff
    out = np.max(vals[None, :] - d2 / (2.0 * s), axis=1)
    return ScalarField(grid, out.reshape(grid.shape))


def optimal_feedback(phi_traj: SpaceTimeField) -> SpaceTimeField:
    """Effort field alpha = grad phi at every node (faces, zero at walls)."""
    return SpaceTimeField(phi_traj.tg, [gradient(p) for p in phi_traj])
