"""
Boundary closures: ghost values outside the truncated domain
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np

from lagflow.core.cone import ConeSpec
from lagflow.core.exceptions import UsageError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.fitting import QuadraticFit, fit_quadratic_values


class ClosureKind(str, Enum):
    FROZEN_HESSIAN_DIRICHLET = "frozen_hessian_dirichlet"
    STATIONARY_CONE_DIRICHLET = "stationary_cone_dirichlet"
    PERIODIC_NONE = "periodic_none"
    FITTED_QUADRATIC_DIRICHLET = "fitted_quadratic_dirichlet"
    SELF_SIMILAR_DIRICHLET = "self_similar_dirichlet"
    TRANSLATING_DIRICHLET = "translating_dirichlet"
    CONE_RELATIVE_NEUMANN = "cone_relative_neumann"
    QUADRATIC_EXTRAPOLATION = "quadratic_extrapolation"


# ghosts built from the field being padded; adding a constant to the field moves them along
FIELD_FOLLOWING = frozenset(
    {
        ClosureKind.FITTED_QUADRATIC_DIRICHLET,
        ClosureKind.CONE_RELATIVE_NEUMANN,
        ClosureKind.QUADRATIC_EXTRAPOLATION,
    }
)


@dataclass(frozen=True)
class BoundaryClosure:
    """Recipe for ghost values at lattice points outside [-R, R]^n

    FROZEN_HESSIAN_DIRICHLET      1/2 x^T A(x) x + t G(A(x))
    STATIONARY_CONE_DIRICHLET     1/2 x^T A(x) x + sign G(A(x)), sign +1 expander, -1 shrinker
    PERIODIC_NONE                 no ghosts; stencils touching the rim give NaN
    FITTED_QUADRATIC_DIRICHLET    least-squares quadratic of the current field
    SELF_SIMILAR_DIRICHLET        t V(x / sqrt t) from an expander profile V, continued by the cone outside V
    TRANSLATING_DIRICHLET         q(x - a t) + t b.x + c t - 1/2 (a.b) t^2 for a quadratic q
    CONE_RELATIVE_NEUMANN         C(x) + (u - C)(x_b), x_b the nearest lattice point inside
    QUADRATIC_EXTRAPOLATION       3u_b - 3u_(b-1) + u_(b-2) along each axis, corners included

    `shift` is added to every Dirichlet ghost value; the field-following kinds
    ignore it. `offset` translates the closure by whole lattice cells.
    """

    kind: ClosureKind
    cone: Optional[ConeSpec] = None
    sign: float = 1.0
    shift: float = 0.0
    offset: Tuple[int, ...] = ()
    profile: Optional[ScalarField] = None
    fit_margin: int = 2
    far_field: Optional[QuadraticFit] = None
    velocity: Tuple[float, ...] = ()
    tilt: Tuple[float, ...] = ()
    speed: float = 0.0

    def __post_init__(self):
        needs_cone = {
            ClosureKind.FROZEN_HESSIAN_DIRICHLET,
            ClosureKind.STATIONARY_CONE_DIRICHLET,
            ClosureKind.SELF_SIMILAR_DIRICHLET,
            ClosureKind.CONE_RELATIVE_NEUMANN,
        }
        if self.kind in needs_cone and self.cone is None:
            raise UsageError(f"{self.kind.value} closure needs a cone")
        if self.kind == ClosureKind.SELF_SIMILAR_DIRICHLET and self.profile is None:
            raise UsageError("self-similar closure needs an expander profile")
        if self.kind == ClosureKind.TRANSLATING_DIRICHLET and self.far_field is None:
            raise UsageError("translating closure needs a quadratic far field")

    @classmethod
    def frozen(cls, cone: ConeSpec, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.FROZEN_HESSIAN_DIRICHLET, cone=cone, **kwargs)

    @classmethod
    def expander(cls, cone: ConeSpec, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.STATIONARY_CONE_DIRICHLET, cone=cone, sign=1.0, **kwargs)

    @classmethod
    def shrinker(cls, cone: ConeSpec, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.STATIONARY_CONE_DIRICHLET, cone=cone, sign=-1.0, **kwargs)

    @classmethod
    def periodic_none(cls) -> "BoundaryClosure":
        return cls(ClosureKind.PERIODIC_NONE)

    @classmethod
    def fitted_quadratic(cls, fit_margin: int = 2, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.FITTED_QUADRATIC_DIRICHLET, fit_margin=fit_margin, **kwargs)

    @classmethod
    def self_similar(cls, profile: ScalarField, cone: ConeSpec, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.SELF_SIMILAR_DIRICHLET, cone=cone, profile=profile, **kwargs)

    @classmethod
    def cone_relative(cls, cone: ConeSpec, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.CONE_RELATIVE_NEUMANN, cone=cone, **kwargs)

    @classmethod
    def extrapolated(cls, **kwargs) -> "BoundaryClosure":
        return cls(ClosureKind.QUADRATIC_EXTRAPOLATION, **kwargs)

    @classmethod
    def translating(
        cls,
        far_field: QuadraticFit,
        a: Sequence[float],
        b: Sequence[float],
        c: float,
        **kwargs,
    ) -> "BoundaryClosure":
        return cls(
            ClosureKind.TRANSLATING_DIRICHLET,
            far_field=far_field,
            velocity=tuple(float(v) for v in a),
            tilt=tuple(float(v) for v in b),
            speed=float(c),
            **kwargs,
        )

    @property
    def follows_field(self) -> bool:
        return self.kind in FIELD_FOLLOWING

    def shifted(self, amount: float) -> "BoundaryClosure":
        if self.follows_field:
            return self
        return _replace(self, shift=self.shift + amount)

    def translated(self, offset: Sequence[int]) -> "BoundaryClosure":
        return _replace(self, offset=tuple(int(o) for o in offset))

    def ghost_values(
        self,
        points: np.ndarray,
        time: float = 0.0,
        current: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    ) -> np.ndarray:
        """Ghost values at points of shape (n, N)

        `current` is (values, points) taken from the field being padded: the fit
        window for the fitted closure, the nearest inside lattice point of every
        ghost for the cone-relative closure.
        """

        if self.kind == ClosureKind.PERIODIC_NONE:
            return np.full(points.shape[1:], np.nan)

        if self.kind == ClosureKind.QUADRATIC_EXTRAPOLATION:
            raise UsageError("extrapolation ghosts exist only for a padded lattice field")

        if self.follows_field and current is None:
            raise UsageError(f"{self.kind.value} closure needs the current field")

        if self.kind == ClosureKind.FITTED_QUADRATIC_DIRICHLET:
            values, sample_points = current
            return fit_quadratic_values(values, sample_points).evaluate(points)

        if self.kind == ClosureKind.CONE_RELATIVE_NEUMANN:
            anchor_values, anchor_points = current
            return self.cone.evaluate(points) + anchor_values - self.cone.evaluate(anchor_points)

        if self.kind == ClosureKind.TRANSLATING_DIRICHLET:
            a = np.asarray(self.velocity).reshape(-1, 1)
            b = np.asarray(self.tilt).reshape(-1, 1)
            moved = self.far_field.evaluate(points - a * time)
            drift = time * np.sum(b * points, axis=0) + self.speed * time
            correction = 0.5 * float(np.dot(self.velocity, self.tilt)) * time * time
            return moved + drift - correction + self.shift

        base = self.cone.evaluate(points)
        if self.kind == ClosureKind.STATIONARY_CONE_DIRICHLET:
            return base + self.sign * self.cone.angle_at(points) + self.shift

        if self.kind == ClosureKind.SELF_SIMILAR_DIRICHLET:
            if time <= 0:
                return base + self.shift
            return base + time * self._profile_excess(points / np.sqrt(time)) + self.shift

        return base + time * self.cone.angle_at(points) + self.shift

    def _profile_excess(self, scaled: np.ndarray) -> np.ndarray:
        """(V - C) at the scaled points, held constant along the normal beyond V's domain"""
        # t C(x / sqrt t) = C(x), so t V_ext(x / sqrt t) = C(x) + t (V - C)(clip(x / sqrt t))
        grid = self.profile.grid
        clipped = np.clip(scaled, -grid.radius, grid.radius)
        profile = self.profile.spline(clipped.T)
        return profile - self.cone.evaluate(clipped)

    def pad(self, values: np.ndarray, grid: Grid, time: float = 0.0, width: int = 1) -> np.ndarray:
        """Field values surrounded by `width` ghost layers"""

        values = np.asarray(values, dtype=float).reshape(grid.shape)
        if self.kind == ClosureKind.QUADRATIC_EXTRAPOLATION:
            return _extrapolate(values, width)

        rim = _rim(grid, width, self.offset)
        padded = np.empty(rim.mask.shape)
        padded[(slice(width, -width),) * grid.dim] = values

        current = None
        if self.kind == ClosureKind.FITTED_QUADRATIC_DIRICHLET:
            window = grid.interior(self.fit_margin)
            coords = grid.coordinates()
            sample_points = np.stack([c[window].ravel() for c in coords], axis=0)
            current = (values[window].ravel(), sample_points)
        elif self.kind == ClosureKind.CONE_RELATIVE_NEUMANN:
            current = (values.ravel()[rim.anchors], rim.anchor_points)
        padded[rim.mask] = self.ghost_values(rim.points, time, current)
        return padded


def cone_closure(cone: ConeSpec, flow: str = "physical") -> BoundaryClosure:
    """Default closure around a cone: Dirichlet data for quadratic cones, cone-relative otherwise

    Away from a single quadratic the exact Dirichlet data jumps across every
    sector interface where it meets the rim; the cone-relative closure carries
    the field's own deviation out instead.
    """

    if not cone.is_quadratic():
        return BoundaryClosure.cone_relative(cone)
    if flow == "physical":
        return BoundaryClosure.frozen(cone)
    if flow == "expander":
        return BoundaryClosure.expander(cone)
    if flow == "shrinker":
        return BoundaryClosure.shrinker(cone)
    raise UsageError(f"unknown flow {flow!r}; expected physical, expander or shrinker")


def _replace(closure: BoundaryClosure, **changes) -> BoundaryClosure:
    fields = {name: getattr(closure, name) for name in closure.__dataclass_fields__}
    fields.update(changes)
    return BoundaryClosure(**fields)


def _extrapolate(values: np.ndarray, width: int) -> np.ndarray:
    """Append `width` layers per side, axis after axis, each exact on quadratics"""

    if width < 1:
        raise UsageError(f"ghost width must be >= 1, got {width}")
    if min(values.shape) < 3:
        raise UsageError("quadratic extrapolation needs at least 3 points per axis")
    padded = values
    for axis in range(values.ndim):
        moved = np.moveaxis(padded, axis, 0)
        layers = list(moved)
        for _ in range(width):
            layers.append(3.0 * layers[-1] - 3.0 * layers[-2] + layers[-3])
            layers.insert(0, 3.0 * layers[0] - 3.0 * layers[1] + layers[2])
        padded = np.moveaxis(np.stack(layers), 0, axis)
    return padded


@dataclass(frozen=True)
class _Rim:
    mask: np.ndarray
    points: np.ndarray
    anchors: np.ndarray
    anchor_points: np.ndarray


@lru_cache(maxsize=32)
def _rim(grid: Grid, width: int, offset: Tuple[int, ...]) -> _Rim:
    """Ghost cells of the padded array, their coordinates (n, N) and nearest inside lattice points"""

    if width < 1:
        raise UsageError(f"ghost width must be >= 1, got {width}")
    m = grid.points_per_axis
    size = m + 2 * width
    offset = np.asarray(offset or (0,) * grid.dim)

    mask = np.ones((size,) * grid.dim, dtype=bool)
    mask[(slice(width, -width),) * grid.dim] = False

    indices = np.argwhere(mask) - width
    # lattice coordinates from integers keep ghost and interior coordinates on one formula
    points = ((indices - grid.center_index - offset) * grid.spacing).T.copy()
    inside = np.clip(indices, 0, m - 1)
    anchors = np.ravel_multi_index(tuple(inside.T), grid.shape)
    anchor_points = ((inside - grid.center_index - offset) * grid.spacing).T.copy()
    for array in (mask, points, anchors, anchor_points):
        array.setflags(write=False)
    return _Rim(mask, points, anchors, anchor_points)
