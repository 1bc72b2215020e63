"""1d quantile-function machinery shared by the optimal-transport pieces.

A unit-mass density on a 1d grid is represented by n samples of its
quantile function Q at the midpoint levels s_j = (j + 1/2)/n.  In these
coordinates the Wasserstein-2 metric is the plain L2 distance, displacement
interpolation is linear interpolation, and the hard cap rho <= 1 turns into
the spacing constraint Q_{j+1} - Q_j >= 1/n plus end gaps of 1/(2n) to the
domain walls.  Subtracting the linear ramp s_j reduces that constraint set
to { nondecreasing, inside a constant box }, so projections become isotonic
regression (pool adjacent violators) followed by a clip.
"""

from __future__ import annotations

import numpy as np

from .grids import DensityField, Grid

__all__ = [
    "density_to_quantiles",
    "quantiles_to_density",
    "pava",
    "project_quantiles_capped",
    "quantile_levels",
]


def quantile_levels(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def density_to_quantiles(rho: DensityField, n_samples: int) -> np.ndarray:
    """Invert the piecewise-linear CDF of a cell density at midpoint levels."""
    grid = rho.grid
    if grid.dim != 1:
        raise ValueError("quantile machinery is 1d only")
    if n_samples < 2:
        raise ValueError("need at least 2 quantile samples")
    h = grid.h[0]
    edges = grid.faces(0)
    masses = rho.values * h
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("cannot take quantiles of a massless density")
    s = quantile_levels(n_samples) * total
    idx = np.searchsorted(cum, s, side="left")
    idx = np.clip(idx, 1, len(edges) - 1)
    cell = idx - 1
    dens = rho.values[cell]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dens > 0, (s - cum[cell]) / np.maximum(dens * h, 1e-300), 0.0)
    q = edges[cell] + np.clip(frac, 0.0, 1.0) * h
    return q


def quantiles_to_density(q: np.ndarray, grid: Grid) -> DensityField:
    """Bin the measure with quantile samples ``q`` back onto grid cells.

    The CDF is rebuilt as the piecewise-linear interpolant through the
    sampled points (q_j, s_j), extended by half the adjacent gap at each end
    (clipped into the domain), and integrated exactly over each cell.  Cell
    averages of a density never exceed its sup, so a cap satisfied by the
    quantile spacings survives the binning.
    """
    if grid.dim != 1:
        raise ValueError("quantile machinery is 1d only")
    n = len(q)
    if n < 2:
        raise ValueError("need at least 2 quantile samples")
    if np.any(np.diff(q) < -1e-12):
        raise ValueError("quantile samples must be nondecreasing")
    q = np.maximum.accumulate(q)
    s = quantile_levels(n)
    lo, hi = grid.lo[0], grid.hi[0]
    front = max(lo, q[0] - 0.5 * (q[1] - q[0]))
    back = min(hi, q[-1] + 0.5 * (q[-1] - q[-2]))
    knots_x = np.concatenate([[front], q, [back]])
    knots_s = np.concatenate([[0.0], s, [1.0]])
    knots_x = np.maximum.accumulate(knots_x)
    edges = grid.faces(0)
    cdf_at_edges = np.interp(edges, knots_x, knots_s)
    vals = np.diff(cdf_at_edges) / grid.h[0]
    return DensityField.from_values(grid, vals, normalize=True)


def pava(y: np.ndarray) -> np.ndarray:
    """Nondecreasing least-squares fit (uniform weights), pool adjacent violators."""
    n = len(y)
    level = np.empty(n)
    weight = np.empty(n)
    start = np.empty(n, dtype=int)
    top = -1
    for i in range(n):
        top += 1
        level[top] = y[i]
        weight[top] = 1.0
        start[top] = i
        while top > 0 and level[top - 1] > level[top]:
            w = weight[top - 1] + weight[top]
            level[top - 1] = (weight[top - 1] * level[top - 1] + weight[top] * level[top]) / w
            weight[top - 1] = w
            top -= 1
    out = np.empty(n)
    for b in range(top + 1):
        end = start[b + 1] if b < top else n
        out[start[b]:end] = level[b]
    return out


def project_quantiles_capped(q: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """L2-project quantile samples onto the admissible set for rho <= 1.

    Constraints: spacing >= 1/n, first sample >= lo + 1/(2n), last sample
    <= hi - 1/(2n).  After subtracting the ramp s_j these become monotone
    plus the constant box [lo, hi - 1]; isotonic regression then clipping
    into a constant box is the exact projection onto that intersection.
    """
    n = len(q)
    if hi - lo < 1.0:
        raise ValueError("domain shorter than 1: the cap rho <= 1 is infeasible")
    ramp = quantile_levels(n)
    r = pava(q - ramp)
    r = np.clip(r, lo, hi - 1.0)
    return r + ramp
