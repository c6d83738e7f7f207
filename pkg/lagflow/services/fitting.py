"""
Least-squares fit of 1/2 x^T A x + b.x + c with the monomial basis {1, x_i, x_i x_j}
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from lagflow.core.grid import ScalarField
from lagflow.services.kernels import SymMatrix


@dataclass(frozen=True)
class QuadraticFit:
    """Quadratic polynomial 1/2 x^T A x + b.x + c"""

    hessian: SymMatrix
    linear: Tuple[float, ...]
    constant: float

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at points of shape (n, ...)"""
        points = np.asarray(points, dtype=float)
        a = self.hessian.to_array()
        b = np.asarray(self.linear).reshape((-1,) + (1,) * (points.ndim - 1))
        quadratic = 0.5 * np.einsum("i...,ij,j...->...", points, a, points)
        return quadratic + np.sum(b * points, axis=0) + self.constant


def _design_matrix(points: np.ndarray) -> np.ndarray:
    """Columns 1, x_i, then x_i x_j for i <= j; points has shape (n, N)"""
    n = points.shape[0]
    columns = [np.ones(points.shape[1])]
    columns.extend(points[i] for i in range(n))
    for i in range(n):
        for j in range(i, n):
            columns.append(points[i] * points[j])
    return np.stack(columns, axis=1)


def fit_quadratic_values(values: np.ndarray, points: np.ndarray) -> QuadraticFit:
    """Fit sampled values (shape (N,)) at points (shape (n, N))"""

    n = points.shape[0]
    coeffs, *_ = np.linalg.lstsq(_design_matrix(points), values, rcond=None)

    constant = float(coeffs[0])
    linear = tuple(float(v) for v in coeffs[1:n + 1])
    a = np.zeros((n, n))
    k = n + 1
    for i in range(n):
        for j in range(i, n):
            if i == j:
                a[i, i] = 2.0 * coeffs[k]
            else:
                a[i, j] = a[j, i] = coeffs[k]
            k += 1
    return QuadraticFit(SymMatrix.from_array(a), linear, constant)


def fit_quadratic(field: ScalarField, margin: int = 0) -> QuadraticFit:
    """Least-squares quadratic over the lattice points at least `margin` cells inside"""

    window = field.grid.interior(margin)
    coords = field.grid.coordinates()
    points = np.stack([c[window].ravel() for c in coords], axis=0)
    return fit_quadratic_values(field.values[window].ravel(), points)


def quadratic_fit_distance(field: ScalarField, margin: int = 0) -> float:
    """Sup distance over the interior from the best-fit quadratic"""
    fit = fit_quadratic(field, margin)
    window = field.grid.interior(margin)
    model = fit.evaluate(field.grid.coordinates())
    return float(np.max(np.abs(field.values[window] - model[window])))
