"""
Pointwise matrix kernels: symmetric eigenvalues, the Lagrangian angle and its linearization

Every kernel has a pointwise form taking a SymMatrix and a batched form taking
an array of shape (..., n, n). Batched forms are what the stencil code calls.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from lagflow.core.exceptions import BranchAmbiguityError, EigenvalueConvergenceError

JACOBI_MAX_SWEEPS = 30
JACOBI_RTOL = 1e-13
SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric n x n matrix stored by its upper triangle, row by row"""

    dim: int
    entries: Tuple[float, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"matrix dimension must be >= 1, got {self.dim}")
        expected = self.dim * (self.dim + 1) // 2
        entries = tuple(float(e) for e in self.entries)
        if len(entries) != expected:
            raise ValueError(f"{self.dim}x{self.dim} symmetric matrix needs {expected} entries, got {len(entries)}")
        if not all(np.isfinite(entries)):
            raise ValueError("matrix entries must be finite")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_array(cls, array) -> "SymMatrix":
        a = np.asarray(array, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise ValueError("matrix is not symmetric")
        rows, cols = np.triu_indices(a.shape[0])
        return cls(a.shape[0], tuple(a[rows, cols]))

    @classmethod
    def diag(cls, values: Sequence[float]) -> "SymMatrix":
        return cls.from_array(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def zeros(cls, dim: int) -> "SymMatrix":
        return cls(dim, (0.0,) * (dim * (dim + 1) // 2))

    def to_array(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        rows, cols = np.triu_indices(self.dim)
        a[rows, cols] = self.entries
        a[cols, rows] = self.entries
        return a

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(sym_eigenvalues(self))))

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(self.dim, tuple(-e for e in self.entries))


def eigenvalues_batch(mats: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of symmetric matrices stacked along leading axes"""

    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    if n == 1:
        return mats[..., 0, :1].copy()
    if n == 2:
        return _eigenvalues_2x2(mats)
    if n == 3:
        return _eigenvalues_3x3(mats)
    return _eigenvalues_jacobi(mats)


def _eigenvalues_2x2(mats: np.ndarray) -> np.ndarray:
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 1]
    mid = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return np.stack([mid - rad, mid + rad], axis=-1)


def _eigenvalues_3x3(mats: np.ndarray) -> np.ndarray:
    # trigonometric solution of the characteristic cubic
    a00, a11, a22 = mats[..., 0, 0], mats[..., 1, 1], mats[..., 2, 2]
    a01, a02, a12 = mats[..., 0, 1], mats[..., 0, 2], mats[..., 1, 2]

    p1 = a01 * a01 + a02 * a02 + a12 * a12
    q = (a00 + a11 + a22) / 3.0
    d0, d1, d2 = a00 - q, a11 - q, a22 - q
    p = np.sqrt((d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1) / 6.0)
    safe_p = np.where(p > 0.0, p, 1.0)

    b00, b11, b22 = d0 / safe_p, d1 / safe_p, d2 / safe_p
    b01, b02, b12 = a01 / safe_p, a02 / safe_p, a12 / safe_p
    det_b = (
        b00 * (b11 * b22 - b12 * b12)
        - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02)
    )
    # |r| <= 1 in exact arithmetic
    r = np.clip(0.5 * det_b, -1.0, 1.0)
    phi = np.arccos(r) / 3.0

    largest = q + 2.0 * p * np.cos(phi)
    smallest = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    middle = 3.0 * q - largest - smallest
    return np.sort(np.stack([smallest, middle, largest], axis=-1), axis=-1)


def _eigenvalues_jacobi(mats: np.ndarray) -> np.ndarray:
    n = mats.shape[-1]
    lead = mats.shape[:-2]
    a = np.array(mats, dtype=float, copy=True).reshape(-1, n, n)
    threshold = JACOBI_RTOL * np.sqrt(np.sum(a * a, axis=(1, 2)))
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    for sweep in range(JACOBI_MAX_SWEEPS + 1):
        off = np.sqrt(2.0 * np.sum(np.where(upper, a * a, 0.0), axis=(1, 2)))
        if np.all(off <= threshold):
            eig = np.sort(np.diagonal(a, axis1=1, axis2=2), axis=-1)
            return eig.reshape(lead + (n,))
        if sweep == JACOBI_MAX_SWEEPS:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _jacobi_rotate(a, p, q)

    raise EigenvalueConvergenceError(
        f"cyclic Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )


def _jacobi_rotate(a: np.ndarray, p: int, q: int):
    apq = a[:, p, q]
    active = apq != 0.0
    if not np.any(active):
        return
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        theta = (a[:, q, q] - a[:, p, p]) / (2.0 * np.where(active, apq, 1.0))
        t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
    t = np.where(active & np.isfinite(t), t, 0.0)
    c = (1.0 / np.sqrt(t * t + 1.0))[:, None]
    s = t[:, None] * c

    col_p = a[:, :, p].copy()
    col_q = a[:, :, q].copy()
    a[:, :, p] = c * col_p - s * col_q
    a[:, :, q] = s * col_p + c * col_q
    row_p = a[:, p, :].copy()
    row_q = a[:, q, :].copy()
    a[:, p, :] = c * row_p - s * row_q
    a[:, q, :] = s * row_p + c * row_q


def sym_eigenvalues(matrix: SymMatrix) -> List[float]:
    """Ascending eigenvalues of a single symmetric matrix"""
    return [float(v) for v in eigenvalues_batch(matrix.to_array())]


def angle_batch(mats: np.ndarray) -> np.ndarray:
    """Lagrangian angle sum_i arctan(lambda_i) for stacked matrices"""
    return np.sum(np.arctan(eigenvalues_batch(mats)), axis=-1)


def angle(matrix: SymMatrix) -> float:
    """Lagrangian angle G(A) = sum_i arctan(lambda_i(A))"""
    return float(angle_batch(matrix.to_array()))


def angle_via_complex_det(matrix: SymMatrix) -> float:
    """Argument of det(I + iA) / sqrt(det(I + A^2)), valid for n <= 4 and |lambda_i| < 1"""

    if matrix.dim > 4:
        raise BranchAmbiguityError(f"complex-determinant angle needs n <= 4, got {matrix.dim}")
    rho = matrix.spectral_radius()
    if rho >= 1.0:
        raise BranchAmbiguityError(f"complex-determinant angle needs spectral radius < 1, got {rho}")

    a = matrix.to_array()
    eye = np.eye(matrix.dim)
    numerator = np.linalg.det(eye + 1j * a)
    normalizer = np.sqrt(np.linalg.det(eye + a @ a))
    return float(np.angle(numerator / normalizer))


def linearization_batch(mats: np.ndarray) -> np.ndarray:
    """(I + A^2)^-1 for stacked symmetric matrices"""
    mats = np.asarray(mats, dtype=float)
    eye = np.eye(mats.shape[-1])
    return np.linalg.inv(eye + mats @ mats)


def linearization(matrix: SymMatrix) -> SymMatrix:
    """Derivative of the angle: dG(A)[B] = trace((I + A^2)^-1 B)"""
    inv = linearization_batch(matrix.to_array())
    return SymMatrix.from_array(0.5 * (inv + inv.T))
