"""
Uniform lattices on [-R, R]^n and the scalar fields that live on them
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Dict, Tuple

import numpy as np
from scipy.interpolate import NdBSpline, RegularGridInterpolator, make_interp_spline

from lagflow.core.exceptions import GridError

MAX_GRID_DIM = 3


@dataclass(frozen=True)
class Grid:
    """Tensor-product lattice with an odd number of points per axis"""

    dim: int
    radius: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim < 1 or self.dim > MAX_GRID_DIM:
            raise GridError(f"grid dimension must be in 1..{MAX_GRID_DIM}, got {self.dim}")
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise GridError(f"grid radius must be positive, got {self.radius}")
        m = self.points_per_axis
        if m < 5 or m % 2 == 0:
            raise GridError(f"points_per_axis must be odd and >= 5, got {m}")
        object.__setattr__(self, "radius", float(self.radius))

    def to_dict(self) -> Dict[str, Any]:
        return {"dim": self.dim, "radius": self.radius, "points_per_axis": self.points_per_axis}

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.points_per_axis - 1)

    @property
    def center_index(self) -> int:
        return (self.points_per_axis - 1) // 2

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def origin(self) -> Tuple[int, ...]:
        return (self.center_index,) * self.dim

    def axis(self) -> np.ndarray:
        """Lattice coordinates of one axis; the middle entry is exactly 0"""
        offsets = np.arange(self.points_per_axis) - self.center_index
        return offsets * self.spacing

    def coordinates(self) -> np.ndarray:
        """Array of shape (n, m, ..., m) holding x_i at every lattice point"""
        return _coordinates(self.dim, self.points_per_axis, self.spacing)

    def interior(self, margin: int) -> Tuple[slice, ...]:
        """Index window excluding `margin` cells next to every face"""
        if margin < 0 or 2 * margin >= self.points_per_axis:
            raise GridError(f"interior margin {margin} leaves no points on a grid with m={self.points_per_axis}")
        return (slice(margin, self.points_per_axis - margin),) * self.dim

    def lattice_index(self, point, atol: float = 1e-9):
        """Index tuple of `point` if it is a lattice point, else None"""
        offsets = np.asarray(point, dtype=float) / self.spacing
        rounded = np.rint(offsets)
        if np.any(np.abs(offsets - rounded) > atol) or np.any(np.abs(rounded) > self.center_index):
            return None
        return tuple(int(i) + self.center_index for i in rounded)

    def window(self, radius: float) -> "Grid":
        """Sub-lattice with the same spacing covering [-radius, radius]^n"""
        half = int(np.floor(radius / self.spacing + 1e-9))
        half = min(half, self.center_index)
        if half < 2:
            raise GridError(f"window radius {radius} holds fewer than 5 points per axis")
        return Grid(dim=self.dim, radius=half * self.spacing, points_per_axis=2 * half + 1)

    def embed_slices(self, sub: "Grid") -> Tuple[slice, ...]:
        """Index window of a same-spacing concentric sub-lattice"""
        if sub.dim != self.dim or not np.isclose(sub.spacing, self.spacing) or sub.center_index > self.center_index:
            raise GridError("sub-lattice is not a concentric window of this grid")
        lo = self.center_index - sub.center_index
        return (slice(lo, lo + sub.points_per_axis),) * self.dim


@lru_cache(maxsize=16)
def _coordinates(dim: int, m: int, h: float) -> np.ndarray:
    offsets = (np.arange(m) - (m - 1) // 2) * h
    mesh = np.meshgrid(*([offsets] * dim), indexing="ij")
    coords = np.stack(mesh, axis=0)
    coords.setflags(write=False)
    return coords


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Potential values on a Grid, row-major with axis 0 slowest"""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.size != self.grid.size:
            raise GridError(f"field has {values.size} values, grid expects {self.grid.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0])
            raise GridError(f"field holds non-finite value at index {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ScalarField":
        """Sample func(x) where x has shape (n, m, ..., m)"""
        return cls(grid, func(grid.coordinates()))

    @cached_property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @cached_property
    def spline(self) -> NdBSpline:
        """Tensor-product not-a-knot cubic spline through the lattice values; exact on cubics"""
        axis = self.grid.axis()
        coeffs = self.values
        knots = []
        for a in range(self.grid.dim):
            fitted = make_interp_spline(axis, coeffs, k=3, axis=a)
            knots.append(fitted.t)
            # make_interp_spline keeps the interpolation axis first in .c
            coeffs = np.moveaxis(fitted.c, 0, a)
        return NdBSpline(tuple(knots), coeffs, 3)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self, other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - float(other))

    def value_at(self, point) -> float:
        """Value at a lattice point given in coordinates"""
        index = self.grid.lattice_index(point)
        if index is None:
            raise GridError(f"{tuple(point)} is not a lattice point")
        return float(self.values[index])

    def sup_distance(self, other: "ScalarField", margin: int = 0) -> float:
        _check_same_grid(self, other)
        window = self.grid.interior(margin)
        return float(np.max(np.abs(self.values[window] - other.values[window])))

    def restrict(self, sub: Grid) -> "ScalarField":
        """Values on a concentric same-spacing window"""
        return ScalarField(sub, self.values[self.grid.embed_slices(sub)])


def _check_same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridError("fields live on different grids")


def sample_field(field: ScalarField, points: np.ndarray, method: str = "cubic") -> Tuple[np.ndarray, bool]:
    """Values at arbitrary points (shape (n, ...)) inside the domain

    Points on the lattice are looked up exactly; otherwise the whole batch is
    interpolated. The flag reports whether interpolation was used.
    """

    grid = field.grid
    points = np.asarray(points, dtype=float)
    offsets = points / grid.spacing
    rounded = np.rint(offsets)
    on_lattice = np.all(np.abs(offsets - rounded) <= 1e-9) and np.all(np.abs(rounded) <= grid.center_index)
    if on_lattice:
        index = tuple((rounded + grid.center_index).astype(int))
        return field.values[index], False

    if np.any(np.abs(points) > grid.radius * (1.0 + 1e-12)):
        raise GridError("sample points leave the grid domain")
    clipped = np.clip(points, -grid.radius, grid.radius)
    flat = clipped.reshape(grid.dim, -1).T
    if method == "cubic":
        return field.spline(flat).reshape(points.shape[1:]), True
    interpolator = RegularGridInterpolator((grid.axis(),) * grid.dim, field.values, method=method)
    return interpolator(flat).reshape(points.shape[1:]), True
