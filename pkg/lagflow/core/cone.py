"""
Homogeneous degree-2 cone data over coordinate-sign sectors, and compact bumps
"""

from typing import List, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from lagflow.core.exceptions import ConeCoverageError, GridError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.kernels import SymMatrix, angle

logger = structlog.get_logger()

# exp(-r^2/w^2) is cut to zero once it drops below exp(-16), i.e. at r = 4w
BUMP_CUTOFF_WIDTHS = 4.0


class ConeSector(BaseModel):
    """One coordinate-sign sector and its constant Hessian"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    sign_pattern: Tuple[int, ...]
    hessian: SymMatrix

    @field_validator("sign_pattern")
    @classmethod
    def validate_sign_pattern(cls, v):
        if any(s not in (-1, 0, 1) for s in v):
            raise ValueError(f"sign pattern entries must be -1, 0 or +1, got {v}")
        return tuple(int(s) for s in v)

    @model_validator(mode="after")
    def validate_dims(self):
        if len(self.sign_pattern) != self.hessian.dim:
            raise ValueError(
                f"sign pattern has {len(self.sign_pattern)} entries, Hessian is {self.hessian.dim}x{self.hessian.dim}"
            )
        return self

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Mask of points (shape (n, ...)) inside the sector; +1 means x_i >= 0, -1 means x_i <= 0"""
        mask = np.ones(points.shape[1:], dtype=bool)
        for axis, sign in enumerate(self.sign_pattern):
            if sign > 0:
                mask &= points[axis] >= 0.0
            elif sign < 0:
                mask &= points[axis] <= 0.0
        return mask

    def quadratic(self, points: np.ndarray) -> np.ndarray:
        a = self.hessian.to_array()
        return 0.5 * np.einsum("i...,ij,j...->...", points, a, points)


class ConeSpec(BaseModel):
    """Piecewise quadratic u(x) = 1/2 x^T A(x) x, first matching sector wins"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int
    sectors: Tuple[ConeSector, ...]

    @model_validator(mode="after")
    def validate_sectors(self):
        if not self.sectors:
            raise ValueError("cone needs at least one sector")
        for k, sector in enumerate(self.sectors):
            if sector.hessian.dim != self.dim:
                raise ValueError(f"sector {k} has dimension {sector.hessian.dim}, cone has {self.dim}")
        return self

    @classmethod
    def quadratic(cls, hessian: SymMatrix) -> "ConeSpec":
        """Single free sector: the global quadratic 1/2 x^T A x"""
        return cls(
            dim=hessian.dim,
            sectors=(ConeSector(sign_pattern=(0,) * hessian.dim, hessian=hessian),),
        )

    @classmethod
    def two_sector(cls, a1: float = 0.5, a2: float = 0.3) -> "ConeSpec":
        """u = 1/2 (a1 sgn(x1) x1^2 + a2 x2^2): the x1^2 coefficient flips with the sign of x1"""
        return cls(
            dim=2,
            sectors=(
                ConeSector(sign_pattern=(1, 0), hessian=SymMatrix.diag([a1, a2])),
                ConeSector(sign_pattern=(-1, 0), hessian=SymMatrix.diag([-a1, a2])),
            ),
        )

    def sector_hessians(self) -> List[SymMatrix]:
        return [sector.hessian for sector in self.sectors]

    def sector_angles(self) -> List[float]:
        return [angle(h) for h in self.sector_hessians()]

    def max_spectral_radius(self) -> float:
        return max(h.spectral_radius() for h in self.sector_hessians())

    def is_quadratic(self) -> bool:
        """True when every sector carries the same Hessian"""
        first = self.sectors[0].hessian
        return all(s.hessian == first for s in self.sectors[1:])

    def sector_index(self, points: np.ndarray) -> np.ndarray:
        """Index of the first sector containing each point (shape (n, ...))"""

        points = np.asarray(points, dtype=float)
        if points.shape[0] != self.dim:
            raise GridError(f"points have dimension {points.shape[0]}, cone has {self.dim}")

        index = np.full(points.shape[1:], -1, dtype=int)
        for k, sector in enumerate(self.sectors):
            index[(index < 0) & sector.contains(points)] = k

        if np.any(index < 0):
            gap = np.argwhere(index < 0)[0]
            where = tuple(float(points[(axis,) + tuple(gap)]) for axis in range(self.dim))
            raise ConeCoverageError(f"no cone sector contains the point {where}")
        return index

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Cone values at points of shape (n, ...)"""
        points = np.asarray(points, dtype=float)
        index = self.sector_index(points)
        values = np.zeros(points.shape[1:])
        for k, sector in enumerate(self.sectors):
            mask = index == k
            if np.any(mask):
                values[mask] = sector.quadratic(points)[mask]
        return values

    def hessian_at(self, points: np.ndarray) -> np.ndarray:
        """Sector Hessian A(x) at each point, shape (..., n, n)"""
        points = np.asarray(points, dtype=float)
        index = self.sector_index(points)
        table = np.stack([h.to_array() for h in self.sector_hessians()])
        return table[index]

    def angle_at(self, points: np.ndarray) -> np.ndarray:
        """G(A(x)) at each point"""
        index = self.sector_index(points)
        return np.asarray(self.sector_angles())[index]

    def interface_defect(self, radius: float = 1.0, samples: int = 33) -> float:
        """Largest disagreement between sectors sharing a point of a coordinate hyperplane"""

        axis_values = np.linspace(-radius, radius, samples)
        worst = 0.0
        for axis in range(self.dim):
            mesh = np.meshgrid(*([axis_values] * self.dim), indexing="ij")
            points = np.stack(mesh, axis=0)
            points[axis] = 0.0
            flat = points.reshape(self.dim, -1)

            values = np.full((len(self.sectors), flat.shape[1]), np.nan)
            for k, sector in enumerate(self.sectors):
                mask = sector.contains(flat)
                values[k, mask] = sector.quadratic(flat)[mask]

            covered = ~np.all(np.isnan(values), axis=0)
            if not np.any(covered):
                continue
            spread = np.nanmax(values[:, covered], axis=0) - np.nanmin(values[:, covered], axis=0)
            worst = max(worst, float(np.max(spread)))

        return worst


def sample_cone(spec: ConeSpec, grid: Grid) -> ScalarField:
    """Cone values 1/2 x^T A(x) x at every lattice point"""

    if spec.dim != grid.dim:
        raise GridError(f"cone dimension {spec.dim} does not match grid dimension {grid.dim}")
    return ScalarField(grid, spec.evaluate(grid.coordinates()))


def add_compact_bump(
    field: ScalarField,
    center: Sequence[float],
    amplitude: float,
    width: float,
) -> ScalarField:
    """Add amplitude * exp(-|x - center|^2 / width^2), cut to zero for |x - center| >= 4 width"""

    if width <= 0:
        raise GridError(f"bump width must be positive, got {width}")
    grid = field.grid
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.shape[0] != grid.dim:
        raise GridError(f"bump center has {center.shape[0]} coordinates, grid has dimension {grid.dim}")

    support = BUMP_CUTOFF_WIDTHS * width
    if np.max(np.abs(center)) + support >= grid.radius:
        raise GridError(
            f"bump support (radius {support} around {tuple(center)}) leaves the domain [-{grid.radius}, {grid.radius}]^{grid.dim}"
        )
    if amplitude == 0:
        return field

    offset = grid.coordinates() - center.reshape((grid.dim,) + (1,) * grid.dim)
    r2 = np.sum(offset * offset, axis=0) / (width * width)
    bump = np.where(r2 < BUMP_CUTOFF_WIDTHS**2, amplitude * np.exp(-r2), 0.0)

    logger.debug("Bump added", amplitude=amplitude, width=width, hessian_bound=bump_hessian_bound(amplitude, width))
    return field.with_values(field.values + bump)


def bump_hessian_bound(amplitude: float, width: float) -> float:
    """Spectral bound on the bump Hessian: max over rho of |(4 rho^2 - 2) e^(-rho^2)| is 2 at rho = 0"""
    return 2.0 * abs(amplitude) / (width * width)
