"""Staggered-grid fields and discrete calculus.

Scalar quantities (densities, potentials, pressures) live at cell centers,
velocities and momenta live on cell faces (MAC layout).  Boundary faces are
pinned to zero, which encodes the no-flux boundary condition once and for
all: every operator built on top of these fields inherits it.

The discrete gradient (cells -> faces) and divergence (faces -> cells) are
exact negative adjoints under the inner products `cell_inner` / `face_inner`,
i.e. <grad f, v>_F + <f, div v>_C = 0 to rounding.  Summation by parts is
what makes the pressure projection conservative and the transport scheme
mass preserving, so the pair is tested to 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "EPS_SAT",
    "EPS_K",
    "MASS_TOL",
    "Grid",
    "TimeGrid",
    "ScalarField",
    "DensityField",
    "FaceVelocityField",
    "SpaceTimeField",
    "build_grid",
    "gradient",
    "divergence",
    "integrate",
    "cell_inner",
    "face_inner",
    "l1_distance",
]

# Saturation threshold: a cell counts as congested when rho >= 1 - EPS_SAT.
EPS_SAT = 1e-6
# Slack allowed above the hard cap rho <= 1 (interpolation / binning roundoff).
EPS_K = 1e-8
# Mass bookkeeping tolerance after construction or normalization.
MASS_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on a box, 1d or 2d.

    ``n`` cells per axis; cell i along axis a has center
    lo[a] + (i + 1/2) h[a].  Faces along axis a sit at lo[a] + i h[a],
    i = 0..n[a], so there are n[a]+1 face layers, the outermost two being
    boundary faces.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or len(self.lo) != len(self.n):
            raise ValueError("lo, hi, n must have matching lengths")
        if self.dim not in (1, 2):
            raise ValueError(f"only 1d and 2d grids supported, got dim={self.dim}")
        for a in range(self.dim):
            if not self.hi[a] > self.lo[a]:
                raise ValueError(f"axis {a}: need hi > lo, got [{self.lo[a]}, {self.hi[a]}]")
            if self.n[a] < 2:
                raise ValueError(f"axis {a}: need at least 2 cells, got {self.n[a]}")

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((self.hi[a] - self.lo[a]) / self.n[a] for a in range(self.dim))

    @property
    def cell_volume(self) -> float:
        v = 1.0
        for a in range(self.dim):
            v *= self.h[a]
        return v

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    def face_shape(self, axis: int) -> tuple[int, ...]:
        s = list(self.n)
        s[axis] += 1
        return tuple(s)

    def centers(self, axis: int = 0) -> np.ndarray:
        h = self.h[axis]
        return self.lo[axis] + h * (np.arange(self.n[axis]) + 0.5)

    def faces(self, axis: int = 0) -> np.ndarray:
        h = self.h[axis]
        return self.lo[axis] + h * np.arange(self.n[axis] + 1)

    def meshes(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays, each of shape ``self.shape``."""
        axes = [self.centers(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def sample(self, f: Callable) -> np.ndarray:
        """Evaluate ``f`` at cell centers; f takes dim positional coordinate arrays."""
        return np.asarray(f(*self.meshes()), dtype=float)

    @property
    def volume(self) -> float:
        v = 1.0
        for a in range(self.dim):
            v *= self.hi[a] - self.lo[a]
        return v


def build_grid(bounds, cells) -> Grid:
    """Build a grid from ``bounds`` and cell counts.

    ``bounds`` is (lo, hi) for 1d or ((lo0, hi0), (lo1, hi1)) for 2d;
    ``cells`` an int or a tuple of ints.
    """
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b[None, :]
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("bounds must be (lo, hi) or a sequence of (lo, hi) pairs")
    if np.isscalar(cells):
        cells = (int(cells),) * b.shape[0]
    cells = tuple(int(c) for c in cells)
    if len(cells) != b.shape[0]:
        raise ValueError("cells must match the number of axes in bounds")
    return Grid(lo=tuple(b[:, 0]), hi=tuple(b[:, 1]), n=cells)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, horizon] with ``steps`` intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one time step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


def _check_values(grid: Grid, values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != grid.shape:
        raise ValueError(f"values shape {v.shape} does not match grid shape {grid.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("field values must be finite")
    return v


@dataclass
class ScalarField:
    """Cell-centered scalar field."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable) -> "ScalarField":
        return cls(grid, grid.sample(f))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class DensityField:
    """Nonnegative cell density, unit mass after normalization.

    ``constrained=True`` additionally asserts the hard cap rho <= 1 + EPS_K.
    Transport steps may push values transiently above 1 by O(h), so the flag
    is only set on fields meant to live inside the constraint set.
    """

    grid: Grid
    values: np.ndarray
    constrained: bool = False

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values)
        if np.any(self.values < -1e-12):
            raise ValueError(f"density has negative entries (min {self.values.min():.3e})")
        self.values = np.maximum(self.values, 0.0)
        m = self.mass
        if abs(m - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {m!r} deviates from 1 beyond {MASS_TOL}")
        if self.constrained and np.any(self.values > 1.0 + EPS_K):
            raise ValueError(
                f"density exceeds the cap: max {self.values.max():.12f} > 1 + {EPS_K}"
            )

    @classmethod
    def from_values(cls, grid: Grid, values, normalize: bool = True,
                    constrained: bool = False) -> "DensityField":
        v = np.asarray(values, dtype=float)
        if normalize:
            m = float(np.sum(v) * grid.cell_volume)
            if m <= 0:
                raise ValueError("cannot normalize a field with nonpositive mass")
            v = v / m
        return cls(grid, v, constrained=constrained)

    @classmethod
    def uniform(cls, grid: Grid) -> "DensityField":
        v = np.full(grid.shape, 1.0 / grid.volume)
        return cls(grid, v, constrained=grid.volume >= 1.0)

    @property
    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def saturated(self, eps_sat: float = EPS_SAT) -> np.ndarray:
        """Boolean mask of congested cells (rho >= 1 - eps_sat)."""
        return self.values >= 1.0 - eps_sat

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.values.copy(), constrained=self.constrained)


@dataclass
class FaceVelocityField:
    """Face-normal velocity components, one array per axis.

    Component a has shape grid.face_shape(a).  The outermost face layers are
    forced to zero (no flux through the boundary).
    """

    grid: Grid
    components: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.components:
            self.components = [np.zeros(self.grid.face_shape(a))
                               for a in range(self.grid.dim)]
        if len(self.components) != self.grid.dim:
            raise ValueError("need one component per axis")
        comps = []
        for a, c in enumerate(self.components):
            c = np.asarray(c, dtype=float)
            if c.shape != self.grid.face_shape(a):
                raise ValueError(
                    f"component {a} shape {c.shape} != face shape {self.grid.face_shape(a)}"
                )
            if not np.all(np.isfinite(c)):
                raise ValueError("velocity values must be finite")
            c = c.copy()
            _boundary_slices_zero(c, a)
            comps.append(c)
        self.components = comps

    @classmethod
    def zeros(cls, grid: Grid) -> "FaceVelocityField":
        return cls(grid)

    @classmethod
    def from_function(cls, grid: Grid, *fs: Callable) -> "FaceVelocityField":
        """Sample one callable per axis at interior face locations."""
        if len(fs) != grid.dim:
            raise ValueError("need one callable per axis")
        comps = []
        for a in range(grid.dim):
            axes = [grid.faces(b) if b == a else grid.centers(b) for b in range(grid.dim)]
            mesh = np.meshgrid(*axes, indexing="ij")
            comps.append(np.asarray(fs[a](*mesh), dtype=float))
        return cls(grid, comps)

    def max_speed(self, axis: int) -> float:
        return float(np.max(np.abs(self.components[axis])))

    def copy(self) -> "FaceVelocityField":
        return FaceVelocityField(self.grid, [c.copy() for c in self.components])

    def __add__(self, other: "FaceVelocityField") -> "FaceVelocityField":
        return FaceVelocityField(
            self.grid, [a + b for a, b in zip(self.components, other.components)]
        )

    def __sub__(self, other: "FaceVelocityField") -> "FaceVelocityField":
        return FaceVelocityField(
            self.grid, [a - b for a, b in zip(self.components, other.components)]
        )

    def __mul__(self, s: float) -> "FaceVelocityField":
        return FaceVelocityField(self.grid, [s * c for c in self.components])

    __rmul__ = __mul__


def _boundary_slices_zero(c: np.ndarray, axis: int) -> None:
    sl_lo = [slice(None)] * c.ndim
    sl_lo[axis] = 0
    sl_hi = [slice(None)] * c.ndim
    sl_hi[axis] = -1
    c[tuple(sl_lo)] = 0.0
    c[tuple(sl_hi)] = 0.0


def _lo_faces(shape_len: int, axis: int):
    sl = [slice(None)] * shape_len
    sl[axis] = slice(0, -1)
    return tuple(sl)


def _hi_faces(shape_len: int, axis: int):
    sl = [slice(None)] * shape_len
    sl[axis] = slice(1, None)
    return tuple(sl)


def gradient_values(grid: Grid, f: np.ndarray) -> list[np.ndarray]:
    """Raw-array gradient: interior face a,i gets (f[i] - f[i-1]) / h[a]."""
    comps = []
    for a in range(grid.dim):
        g = np.zeros(grid.face_shape(a))
        interior = [slice(None)] * grid.dim
        interior[a] = slice(1, -1)
        g[tuple(interior)] = np.diff(f, axis=a) / grid.h[a]
        comps.append(g)
    return comps


def divergence_values(grid: Grid, comps: Sequence[np.ndarray]) -> np.ndarray:
    """Raw-array divergence: cell i gets sum_a (v[i+1] - v[i]) / h[a]."""
    out = np.zeros(grid.shape)
    nd = grid.dim
    for a in range(nd):
        c = comps[a]
        out += (c[_hi_faces(nd, a)] - c[_lo_faces(nd, a)]) / grid.h[a]
    return out


def gradient(f: ScalarField) -> FaceVelocityField:
    """Discrete gradient, cells to faces, zero on boundary faces."""
    return FaceVelocityField(f.grid, gradient_values(f.grid, f.values))


def divergence(v: FaceVelocityField) -> ScalarField:
    """Discrete divergence, faces to cells; exact negative adjoint of gradient."""
    return ScalarField(v.grid, divergence_values(v.grid, v.components))


def integrate(f: ScalarField, rho: DensityField | None = None) -> float:
    """Integral of f dx, or of f d(rho) when a density is given."""
    if rho is None:
        return float(np.sum(f.values) * f.grid.cell_volume)
    if rho.grid != f.grid:
        raise ValueError("field and density live on different grids")
    return float(np.sum(f.values * rho.values) * f.grid.cell_volume)


def cell_inner(f: ScalarField | np.ndarray, g: ScalarField | np.ndarray,
               grid: Grid | None = None) -> float:
    fv = f.values if isinstance(f, ScalarField) else f
    gv = g.values if isinstance(g, ScalarField) else g
    grid = grid or (f.grid if isinstance(f, ScalarField) else g.grid)
    return float(np.sum(fv * gv) * grid.cell_volume)


def face_inner(v: FaceVelocityField, w: FaceVelocityField) -> float:
    """L2 pairing on faces with cell-volume weights (the adjointness metric)."""
    s = 0.0
    for a in range(v.grid.dim):
        s += float(np.sum(v.components[a] * w.components[a]))
    return s * v.grid.cell_volume


def l1_distance(r1: DensityField | ScalarField, r2: DensityField | ScalarField) -> float:
    return float(np.sum(np.abs(r1.values - r2.values)) * r1.grid.cell_volume)


@dataclass
class SpaceTimeField:
    """A time-indexed list of same-kind fields on a shared grid."""

    tg: TimeGrid
    entries: list

    def __post_init__(self):
        if len(self.entries) == 0:
            raise ValueError("empty trajectory")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, k):
        return self.entries[k]

    def __iter__(self):
        return iter(self.entries)

    @property
    def grid(self) -> Grid:
        return self.entries[0].grid

    def values_array(self) -> np.ndarray:
        """Stack scalar-kind entries into one (nt, *shape) array."""
        return np.stack([e.values for e in self.entries])

    @classmethod
    def constant(cls, tg: TimeGrid, f, n_entries: int | None = None) -> "SpaceTimeField":
        n = (tg.steps + 1) if n_entries is None else n_entries
        return cls(tg, [f.copy() for _ in range(n)])
