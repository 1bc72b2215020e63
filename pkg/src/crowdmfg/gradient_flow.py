"""1d Wasserstein gradient flows by minimizing movements (JKO stepping).

Each step solves

    Q_{k+1} = argmin  E(Q) + |Q - Q_k|^2 / (2 tau)

over quantile vectors Q, where E carries the potential energy int D drho
plus either the hard cap rho <= 1 (constrained mode, handled by the exact
isotonic projection) or the congestion penalty (1/m) int rho^m (penalized
mode, a smooth barrier in the quantile spacings).  The W2 term is the plain
squared distance in quantile coordinates, so the step objective is convex
and a projected gradient descent with backtracking solves it; starting the
inner descent at Q_k makes the energy sequence nonincreasing by
construction.

The penalized flow is a congested drift-diffusion: as a sanity anchor,
`porous_media_reference` integrates

    drho/dt - div(rho grad D) - ((m-1)/m) lap(rho^m) = 0

with an explicit conservative scheme on the same grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grids import DensityField, Grid, ScalarField, TimeGrid
from .quantiles import (
    density_to_quantiles,
    pava,
    project_quantiles_capped,
    quantile_levels,
    quantiles_to_density,
)

__all__ = [
    "QuantileFunction",
    "JkoConfig",
    "w2_distance_1d",
    "geodesic_1d",
    "jko_step",
    "run_gradient_flow",
    "porous_media_reference",
]


@dataclass
class QuantileFunction:
    """Samples of a quantile function at midpoint levels on a fixed domain."""

    samples: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or len(self.samples) < 2:
            raise ValueError("need a 1d vector of at least 2 samples")
        if np.any(np.diff(self.samples) < -1e-10):
            raise ValueError("quantile samples must be nondecreasing")

    @property
    def n(self) -> int:
        return len(self.samples)

    @classmethod
    def of(cls, rho: DensityField, n_samples: int) -> "QuantileFunction":
        return cls(density_to_quantiles(rho, n_samples), rho.grid.lo[0], rho.grid.hi[0])

    def to_density(self, grid: Grid) -> DensityField:
        return quantiles_to_density(self.samples, grid)


def w2_distance_1d(rho1: DensityField, rho2: DensityField,
                   n_samples: int | None = None) -> float:
    """Wasserstein-2 distance via quantile sampling: (mean (Q1-Q2)^2)^(1/2)."""
    if rho1.grid.dim != 1:
        raise ValueError("w2_distance_1d is 1d only")
    n = n_samples or max(1024, 4 * rho1.grid.n[0])
    q1 = density_to_quantiles(rho1, n)
    q2 = density_to_quantiles(rho2, n)
    return float(np.sqrt(np.mean((q1 - q2) ** 2)))


def geodesic_1d(rho0: DensityField, rho1: DensityField, t: float,
                n_samples: int | None = None) -> DensityField:
    """Displacement interpolation at parameter t in [0, 1].

    Linear interpolation of quantile samples; spacing constraints are convex,
    so if both endpoints satisfy the cap the whole path does.  Endpoints are
    returned as-is.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return rho0.copy()
    if t == 1.0:
        return rho1.copy()
    n = n_samples or max(1024, 4 * rho0.grid.n[0])
    q0 = density_to_quantiles(rho0, n)
    q1 = density_to_quantiles(rho1, n)
    out = quantiles_to_density((1.0 - t) * q0 + t * q1, rho0.grid)
    out.constrained = rho0.constrained and rho1.constrained
    return out


@dataclass
class JkoConfig:
    """Minimizing-movement step parameters.

    mode "constrained" enforces rho <= 1 exactly (in quantile coordinates);
    mode "penalized" adds the congestion energy (1/m) int rho^m instead.
    """

    tau: float
    mode: str = "constrained"
    m: float = 2.0
    n_samples: int = 200
    inner_tol: float = 1e-9
    max_inner: int = 5000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.mode not in ("constrained", "penalized"):
            raise ValueError(f"mode must be 'constrained' or 'penalized', got {self.mode!r}")
        if self.mode == "penalized" and self.m <= 1:
            raise ValueError("penalized mode needs m > 1")


# minimum quantile spacing kept in penalized mode so the barrier stays finite
_SPACING_FLOOR_FRACTION = 1e-9


def _interp_potential(grid: Grid, D: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    return grid.centers(), D.values


def _potential_energy(q: np.ndarray, xc: np.ndarray, Dv: np.ndarray) -> float:
    return float(np.mean(np.interp(q, xc, Dv)))


def _potential_grad(q: np.ndarray, xc: np.ndarray, Dv: np.ndarray) -> np.ndarray:
    # derivative of mean(D(Q_j)): slope of the interpolant at each sample
    n = len(q)
    idx = np.clip(np.searchsorted(xc, q) - 1, 0, len(xc) - 2)
    slope = (Dv[idx + 1] - Dv[idx]) / (xc[idx + 1] - xc[idx])
    inside = (q > xc[0]) & (q < xc[-1])
    return np.where(inside, slope, 0.0) / n


def _penalty_energy(q: np.ndarray, m: float) -> float:
    n = len(q)
    gaps = np.diff(q)
    if np.any(gaps <= 0):
        return np.inf
    return float(np.sum((n * gaps) ** (1.0 - m)) / (m * n))


def _penalty_grad(q: np.ndarray, m: float) -> np.ndarray:
    n = len(q)
    gaps = np.diff(q)
    dseg = ((1.0 - m) / m) * (n * gaps) ** (-m)   # d/d(gap) of each segment term
    g = np.zeros_like(q)
    g[:-1] -= dseg
    g[1:] += dseg
    return g


def _project_monotone(q: np.ndarray, lo: float, hi: float, floor: float) -> np.ndarray:
    """Project onto { spacing >= floor, inside [lo, hi] } (exact, via PAVA)."""
    n = len(q)
    ramp = floor * np.arange(n)
    r = pava(q - ramp)
    r = np.clip(r, lo, hi - floor * (n - 1))
    return r + ramp


def jko_step(rho_k: DensityField, D: ScalarField, cfg: JkoConfig) -> DensityField:
    """One minimizing-movement step from ``rho_k`` under potential ``D``."""
    q, _ = _jko_step_q(density_to_quantiles(rho_k, cfg.n_samples), D, cfg)
    out = quantiles_to_density(q, rho_k.grid)
    out.constrained = cfg.mode == "constrained"
    return out


def _jko_objective(q: np.ndarray, qk: np.ndarray, xc, Dv, cfg: JkoConfig) -> float:
    obj = _potential_energy(q, xc, Dv)
    if cfg.mode == "penalized":
        obj += _penalty_energy(q, cfg.m)
    obj += float(np.mean((q - qk) ** 2)) / (2.0 * cfg.tau)
    return obj


def _jko_step_q(qk: np.ndarray, D: ScalarField, cfg: JkoConfig) -> tuple[np.ndarray, float]:
    """Inner solve in quantile coordinates; returns (argmin, objective)."""
    grid = D.grid
    lo, hi = grid.lo[0], grid.hi[0]
    xc, Dv = _interp_potential(grid, D)
    n = cfg.n_samples

    if cfg.mode == "constrained":
        floor = 1.0 / n

        def project(q):
            # fast path: step candidates are usually already feasible
            if q[0] >= lo + 0.5 * floor and q[-1] <= hi - 0.5 * floor \
                    and np.all(np.diff(q) >= floor):
                return q
            return project_quantiles_capped(q, lo, hi)
    else:
        floor = _SPACING_FLOOR_FRACTION / n

        def project(q):
            if lo <= q[0] and q[-1] <= hi and np.all(np.diff(q) >= floor):
                return q
            return _project_monotone(q, lo, hi, floor)

    def grad(q):
        g = _potential_grad(q, xc, Dv)
        if cfg.mode == "penalized":
            g += _penalty_grad(q, cfg.m)
        g += (q - qk) / (cfg.tau * n)
        return g

    q = project(qk.copy())
    obj = _jko_objective(q, qk, xc, Dv, cfg)
    scale = max(1.0, abs(obj))
    g = grad(q)
    step = cfg.tau  # natural scale: pure-W2 gradient step of size tau is exact
    q_prev = g_prev = None
    for _ in range(cfg.max_inner):
        if q_prev is not None:
            # Barzilai-Borwein initial step, safeguarded by the backtracking
            dq = q - q_prev
            dg = g - g_prev
            denom = float(np.dot(dq, dg))
            if denom > 0:
                step = min(max(float(np.dot(dq, dq)) / denom / n, 1e-12), 1e6 * cfg.tau)
        cand, cand_obj = q, obj
        while step > 1e-16:
            cand = project(q - (step * n) * g)   # metric scaling: mean-square geometry
            cand_obj = _jko_objective(cand, qk, xc, Dv, cfg)
            if cand_obj <= obj:
                break
            step *= 0.5
        decrease = obj - cand_obj
        q_prev, g_prev = q, g
        if cand_obj < obj:
            q, obj = cand, cand_obj
            g = grad(q)
        if decrease <= cfg.inner_tol * scale:
            break
    return q, obj


def flow_energy(rho: DensityField, D: ScalarField, cfg: JkoConfig) -> float:
    """Driving energy evaluated in the same discretization the steps minimize."""
    q = density_to_quantiles(rho, cfg.n_samples)
    e = _potential_energy(q, *_interp_potential(D.grid, D))
    if cfg.mode == "penalized":
        e += _penalty_energy(q, cfg.m)
    return e


def run_gradient_flow(rho0: DensityField, D: ScalarField, cfg: JkoConfig,
                      steps: int) -> tuple[list[DensityField], np.ndarray, np.ndarray]:
    """Iterate jko_step; returns (densities, energies, W2 increments).

    Energies are evaluated in quantile form and are nonincreasing by
    construction: each inner solve starts from the previous iterate.
    The flow state is kept in quantile coordinates between steps so no
    binning error accumulates.
    """
    grid = rho0.grid
    xc, Dv = _interp_potential(grid, D)
    q = density_to_quantiles(rho0, cfg.n_samples)
    if cfg.mode == "constrained":
        q = project_quantiles_capped(q, grid.lo[0], grid.hi[0])

    def energy(qv):
        e = _potential_energy(qv, xc, Dv)
        if cfg.mode == "penalized":
            e += _penalty_energy(qv, cfg.m)
        return e

    dens = [rho0]
    energies = [energy(q)]
    increments = []
    for _ in range(steps):
        q_new, _ = _jko_step_q(q, D, cfg)
        increments.append(float(np.sqrt(np.mean((q_new - q) ** 2))))
        q = q_new
        energies.append(energy(q))
        d = quantiles_to_density(q, grid)
        d.constrained = cfg.mode == "constrained"
        dens.append(d)
    return dens, np.asarray(energies), np.asarray(increments)


def porous_media_reference(rho0: DensityField, D: ScalarField, m: float,
                           horizon: float, sample_times: np.ndarray,
                           safety: float = 0.4) -> list[DensityField]:
    """Explicit conservative drift-diffusion marcher, sampled at given times.

    Face flux = upwind(rho) * (-grad D) - ((m-1)/m) * grad(rho^m); time step
    restricted by both the drift CFL and the degenerate-diffusion stability
    limit, recomputed as the solution evolves.
    """
    grid = rho0.grid
    if grid.dim != 1:
        raise ValueError("reference marcher is 1d only")
    h = grid.h[0]
    drift = np.zeros(grid.n[0] + 1)
    drift[1:-1] = -np.diff(D.values) / h
    sample_times = np.sort(np.asarray(sample_times, dtype=float))
    if sample_times[-1] > horizon + 1e-12:
        raise ValueError("sample times exceed the horizon")
    rho = rho0.values.copy()
    out = []
    t = 0.0
    next_i = 0
    coef = (m - 1.0) / m
    while next_i < len(sample_times):
        if t >= sample_times[next_i] - 1e-14:
            out.append(DensityField.from_values(grid, rho, normalize=False))
            next_i += 1
            continue
        diff_coef = (m - 1.0) * float(np.max(rho) ** (m - 1.0)) + 1e-30
        vmax = float(np.max(np.abs(drift))) + 1e-30
        dt = safety * min(h * h / (2.0 * diff_coef), h / vmax)
        dt = min(dt, sample_times[next_i] - t)
        flux = np.zeros(grid.n[0] + 1)
        up = np.where(drift[1:-1] > 0, rho[:-1], rho[1:])
        flux[1:-1] = drift[1:-1] * up - coef * np.diff(rho ** m) / h
        rho = rho - dt / h * np.diff(flux)
        rho = np.maximum(rho, 0.0)
        t += dt
    return out
