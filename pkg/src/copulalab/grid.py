"""Uniform lattices on the unit cube and functions tabulated on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid", "GridFunction", "Region", "shrink_region"]

# Guard against floating-point drift when deciding whether a lattice node
# lies inside a closed region.
_NODE_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform lattice {0, 1/(m-1), ..., 1}^d."""

    d: int
    m: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.m < 2:
            raise ValueError(f"points per axis must be >= 2, got {self.m}")

    @property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis; includes 0 and 1 exactly."""
        return np.linspace(0.0, 1.0, self.m)

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.d

    @property
    def step(self) -> float:
        return 1.0 / (self.m - 1)

    def nodes(self) -> np.ndarray:
        """All lattice nodes as an array of shape (m**d, d), row-major."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=-1)


class GridFunction:
    """Real function on [0,1]^d stored by its values at the lattice nodes.

    Evaluation between nodes is multilinear; at a node the stored value is
    returned exactly.  Instances are immutable.
    """

    def __init__(self, grid: Grid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape == (grid.m ** grid.d,):
            values = values.reshape(grid.shape)
        if values.shape != grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid shape {grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("grid-function values must be finite")
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        """Tabulate ``fn`` (vectorized over an (..., d) point array)."""
        pts = grid.nodes()
        vals = np.asarray(fn(pts), dtype=float).reshape(grid.shape)
        return cls(grid, vals)

    def __call__(self, u) -> np.ndarray:
        """Multilinear interpolation at points ``u`` of shape (..., d)."""
        u = np.asarray(u, dtype=float)
        scalar = u.ndim == 1
        pts = np.atleast_2d(u)
        if pts.shape[-1] != self.grid.d:
            raise ValueError(f"points must have {self.grid.d} coordinates")
        if np.any(pts < -_NODE_TOL) or np.any(pts > 1.0 + _NODE_TOL):
            raise ValueError("evaluation point outside [0,1]^d")
        pts = np.clip(pts, 0.0, 1.0)

        scaled = pts * (self.grid.m - 1)
        # snap to the node when within tolerance so stored values are
        # returned exactly at lattice points
        nearest = np.rint(scaled)
        snap = np.abs(scaled - nearest) <= _NODE_TOL * (self.grid.m - 1)
        scaled = np.where(snap, nearest, scaled)
        lo = np.floor(scaled).astype(int)
        lo = np.minimum(lo, self.grid.m - 2)
        frac = scaled - lo

        out = np.zeros(pts.shape[0])
        # Accumulate the 2^d corner contributions of the containing cell.
        for corner in range(2 ** self.grid.d):
            bits = (corner >> np.arange(self.grid.d)) & 1
            idx = lo + bits
            weight = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
            out += weight * self.values[tuple(idx.T)]
        return out[0] if scalar else out

    # -- arithmetic (same grid required) -------------------------------

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ValueError("grid functions live on different grids")
            return GridFunction(self.grid, op(self.values, other.values))
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def sup_norm(self, region: "Region | None" = None) -> float:
        mask = _region_mask(self.grid, region)
        return float(np.max(np.abs(self.values[mask])))


@dataclass(frozen=True)
class Region:
    """The closed box [lower, upper]^d inside the unit cube."""

    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError(f"degenerate region [{self.lower}, {self.upper}]")

    @property
    def is_full(self) -> bool:
        return self.lower == 0.0 and self.upper == 1.0


def _region_mask(grid: Grid, region: Region | None) -> np.ndarray:
    if region is None or region.is_full:
        return np.ones(grid.shape, dtype=bool)
    ax = grid.axis
    inside = (ax >= region.lower - _NODE_TOL) & (ax <= region.upper + _NODE_TOL)
    mask = inside
    for _ in range(grid.d - 1):
        mask = np.multiply.outer(mask, inside)
    return mask


def sup_diff(f: GridFunction, g: GridFunction, region: Region | None = None) -> float:
    """Max of |f - g| over the lattice nodes inside ``region``."""
    if f.grid != g.grid:
        raise ValueError("sup_diff requires grid functions on the same grid")
    mask = _region_mask(f.grid, region)
    if not mask.any():
        raise ValueError("region contains no lattice node")
    return float(np.max(np.abs(f.values[mask] - g.values[mask])))


def shrink_region(epsilon: float, n: int, vartheta: float = 1.0) -> Region:
    """Box [eps * n^(-vartheta/2), 1 - eps * n^(-vartheta/2)]^d."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not (0.0 < vartheta <= 1.0):
        raise ValueError("vartheta must lie in (0, 1]")
    margin = epsilon * float(n) ** (-vartheta / 2.0)
    if margin >= 0.5:
        raise ValueError(
            f"margin {margin} >= 1/2: region would be empty (epsilon={epsilon}, n={n})"
        )
    return Region(margin, 1.0 - margin)
