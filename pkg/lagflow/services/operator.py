"""
Finite-difference stencils and the soliton residual operators
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from lagflow.core.exceptions import StencilError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.closure import BoundaryClosure
from lagflow.services.kernels import SymMatrix, angle_batch, eigenvalues_batch
from lagflow.services.tiling import map_pointwise


@dataclass(frozen=True, eq=False)
class HessianField:
    """Discrete D^2u at every lattice point, array of shape (m, ..., m, n, n)

    Entries next to the boundary come from ghost values; with a PERIODIC_NONE
    closure they are NaN.
    """

    grid: Grid
    matrices: np.ndarray = field(repr=False)

    def at(self, index: Tuple[int, ...]) -> SymMatrix:
        return SymMatrix.from_array(self.matrices[tuple(index)])

    def eigenvalues(self, workers: int = 1) -> np.ndarray:
        return map_pointwise(eigenvalues_batch, self.matrices, 2, workers)

    def angles(self, workers: int = 1) -> np.ndarray:
        return map_pointwise(angle_batch, self.matrices, 2, workers)

    def spectrum_range(self, margin: int) -> Tuple[float, float]:
        """(min, max) eigenvalue over the interior window"""
        window = self.grid.interior(margin)
        eig = self.eigenvalues()[window]
        return float(np.min(eig)), float(np.max(eig))


def shifted(padded: np.ndarray, offsets: Dict[int, int], trim: int = 1) -> np.ndarray:
    """View of padded shifted by `offsets` cells, cropped by `trim` on every side"""
    index = []
    for axis in range(padded.ndim):
        o = offsets.get(axis, 0)
        index.append(slice(trim + o, padded.shape[axis] - trim + o))
    return padded[tuple(index)]


def second_differences(padded: np.ndarray, h: float) -> np.ndarray:
    """Centered Hessian stencil on all but the outermost layer of `padded`"""

    n = padded.ndim
    center = shifted(padded, {})
    out = np.empty(center.shape + (n, n))
    for i in range(n):
        plus = shifted(padded, {i: 1})
        minus = shifted(padded, {i: -1})
        out[..., i, i] = (plus - 2.0 * center + minus) / (h * h)
        for j in range(i + 1, n):
            cross = (
                shifted(padded, {i: 1, j: 1})
                - shifted(padded, {i: 1, j: -1})
                - shifted(padded, {i: -1, j: 1})
                + shifted(padded, {i: -1, j: -1})
            ) / (4.0 * h * h)
            out[..., i, j] = cross
            out[..., j, i] = cross
    return out


def first_differences(padded: np.ndarray, h: float) -> np.ndarray:
    """Centered gradient stencil, components on the last axis"""
    n = padded.ndim
    return np.stack(
        [(shifted(padded, {i: 1}) - shifted(padded, {i: -1})) / (2.0 * h) for i in range(n)],
        axis=-1,
    )


def one_sided_drift(padded: np.ndarray, h: float, velocity: np.ndarray) -> np.ndarray:
    """Upwind beta.grad u for a drift term with beta of shape (n, m, ..., m)

    Forward differences where beta_i > 0, backward where beta_i < 0.
    """
    n = padded.ndim
    center = shifted(padded, {})
    total = np.zeros(center.shape)
    for i in range(n):
        forward = (shifted(padded, {i: 1}) - center) / h
        backward = (center - shifted(padded, {i: -1})) / h
        total += np.where(velocity[i] > 0, velocity[i] * forward, velocity[i] * backward)
    return total


def _require(ghost: Optional[BoundaryClosure]) -> BoundaryClosure:
    if ghost is None:
        raise StencilError("stencil leaves the grid and no boundary closure was supplied")
    return ghost


def _check_grid(u: ScalarField, grid: Optional[Grid]):
    if grid is not None and grid != u.grid:
        raise StencilError("field and stencil grid differ")


def hessian(
    u: ScalarField,
    ghost: Optional[BoundaryClosure],
    time: float = 0.0,
    grid: Optional[Grid] = None,
) -> HessianField:
    _check_grid(u, grid)
    padded = _require(ghost).pad(u.values, u.grid, time, width=1)
    return HessianField(u.grid, second_differences(padded, u.grid.spacing))


def gradient(
    u: ScalarField,
    ghost: Optional[BoundaryClosure],
    time: float = 0.0,
    grid: Optional[Grid] = None,
) -> np.ndarray:
    """Centered gradient, shape (m, ..., m, n)"""
    _check_grid(u, grid)
    padded = _require(ghost).pad(u.values, u.grid, time, width=1)
    return first_differences(padded, u.grid.spacing)


def _euler_term(u: ScalarField, grad: np.ndarray) -> np.ndarray:
    """1/2 x.grad u"""
    coords = np.moveaxis(u.grid.coordinates(), 0, -1)
    return 0.5 * np.sum(coords * grad, axis=-1)


def angle_field(u: ScalarField, ghost: Optional[BoundaryClosure], time: float = 0.0, workers: int = 1) -> np.ndarray:
    """G(D^2u) at every lattice point"""
    return hessian(u, ghost, time).angles(workers)


def expander_residual(
    v: ScalarField,
    ghost: Optional[BoundaryClosure],
    time: float = 0.0,
    workers: int = 1,
) -> np.ndarray:
    """G(D^2v) - v + 1/2 x.grad v"""
    padded = _require(ghost).pad(v.values, v.grid, time, width=1)
    h = v.grid.spacing
    g = HessianField(v.grid, second_differences(padded, h)).angles(workers)
    return g - v.values + _euler_term(v, first_differences(padded, h))


def shrinker_residual(
    v: ScalarField,
    ghost: Optional[BoundaryClosure],
    time: float = 0.0,
    workers: int = 1,
) -> np.ndarray:
    """G(D^2v) + v - 1/2 x.grad v"""
    padded = _require(ghost).pad(v.values, v.grid, time, width=1)
    h = v.grid.spacing
    g = HessianField(v.grid, second_differences(padded, h)).angles(workers)
    return g + v.values - _euler_term(v, first_differences(padded, h))


def translator_residual(
    u0: ScalarField,
    a: Sequence[float],
    b: Sequence[float],
    c: float,
    ghost: Optional[BoundaryClosure],
    workers: int = 1,
) -> np.ndarray:
    """sum arctan(lambda_i) + a.grad u0 - b.x - c"""

    n = u0.grid.dim
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (n,) or b.shape != (n,):
        raise StencilError(f"translator vectors must have length {n}")

    padded = _require(ghost).pad(u0.values, u0.grid, 0.0, width=1)
    h = u0.grid.spacing
    g = HessianField(u0.grid, second_differences(padded, h)).angles(workers)
    grad = first_differences(padded, h)
    coords = np.moveaxis(u0.grid.coordinates(), 0, -1)
    return g + grad @ a - coords @ b - c


def self_similar_residual(
    u: ScalarField,
    ghost: Optional[BoundaryClosure],
    time: float,
    workers: int = 1,
) -> np.ndarray:
    """G(D^2u) - (u - 1/2 x.grad u) / t, zero on self-expanding solutions; NaN at t = 0"""
    padded = _require(ghost).pad(u.values, u.grid, time, width=1)
    h = u.grid.spacing
    g = HessianField(u.grid, second_differences(padded, h)).angles(workers)
    if time <= 0:
        return np.full(u.grid.shape, np.nan)
    return g - (u.values - _euler_term(u, first_differences(padded, h))) / time


def sup_interior(values: np.ndarray, grid: Grid, margin: int) -> float:
    return float(np.max(np.abs(values[grid.interior(margin)])))
