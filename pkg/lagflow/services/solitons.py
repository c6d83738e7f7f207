"""
Soliton constructors and verifiers: quadratic solitons, expanders from cones,
the shrinker triviality check, translators and the Condition A/B checks
"""

import time as clock
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from lagflow.core.cone import ConeSpec, sample_cone
from lagflow.core.config import RunConfig, settings
from lagflow.core.exceptions import (
    ConditionAViolation,
    GridError,
    NonConvergenceError,
    UsageError,
)
from lagflow.core.grid import Grid, ScalarField, sample_field
from lagflow.services.closure import BoundaryClosure, cone_closure
from lagflow.services.diagnostics import FlowReport, d3_sup
from lagflow.services.fitting import fit_quadratic, fit_quadratic_values, quadratic_fit_distance
from lagflow.services.flow_engine import FlowKind, GaugeReference, run_flow, scaling_transform
from lagflow.services.kernels import SymMatrix, angle
from lagflow.services.operator import (
    expander_residual,
    hessian,
    shrinker_residual,
    sup_interior,
    translator_residual,
)
from lagflow.utils.logging import flow_logger

logger = structlog.get_logger()

CONDITION_A_ROUNDOFF = 1e-12
# a certified expander may exceed the Hessian bound 1 - delta by this much
CONDITION_A_TOLERANCE = 1e-6
CONDITION_B_SCALES = (2, 3, 4)
FIXED_POINT_D3 = 1e-10
SHRINKER_DECAY_FACTOR = 0.1
# the triviality fit uses |y| <= 2, where the perturbation sits
SHRINKER_FIT_RADIUS = 2.0
ORIGIN_FIT_CELLS = 2


class QuadraticSoliton(BaseModel):
    """1/2 x^T A x + constant, with constant = +G(A) (expander) or -G(A) (shrinker)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    hessian: SymMatrix
    kind: Literal["expander", "shrinker"]
    constant: float

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        a = self.hessian.to_array()
        return 0.5 * np.einsum("i...,ij,j...->...", points, a, points) + self.constant

    def sample(self, grid: Grid) -> ScalarField:
        if grid.dim != self.hessian.dim:
            raise GridError(f"soliton dimension {self.hessian.dim} does not match grid dimension {grid.dim}")
        return ScalarField(grid, self.evaluate(grid.coordinates()))

    def cone(self) -> ConeSpec:
        return ConeSpec.quadratic(self.hessian)

    def closure(self) -> BoundaryClosure:
        if self.kind == "expander":
            return BoundaryClosure.expander(self.cone())
        return BoundaryClosure.shrinker(self.cone())

    def gauge(self) -> GaugeReference:
        return GaugeReference(value=self.constant, gradient=(0.0,) * self.hessian.dim)


def quadratic_soliton(hessian_matrix: SymMatrix, kind: str) -> QuadraticSoliton:
    if kind not in ("expander", "shrinker"):
        raise UsageError(f"soliton kind must be 'expander' or 'shrinker', got {kind!r}")
    rho = hessian_matrix.spectral_radius()
    if rho >= 1.0:
        raise ConditionAViolation(f"quadratic soliton needs spectral radius < 1, got {rho}", margin=1.0 - rho)
    g = angle(hessian_matrix)
    return QuadraticSoliton(hessian=hessian_matrix, kind=kind, constant=g if kind == "expander" else -g)


class SolitonCertificate(BaseModel):
    """Evidence record of a soliton construction or verification"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: str
    residual_sup_interior: float
    residual_field: ScalarField = Field(exclude=True)
    condition_a_margin: float
    d3_sup: float
    passed: bool
    tolerance: float
    interior_margin_cells: int
    provenance: Dict[str, Any] = Field(default_factory=dict)

    # shrinker triviality
    d3_initial: Optional[float] = None
    d3_trend: List[float] = Field(default_factory=list)
    fit_distance: Optional[float] = None
    fit_distances: List[float] = Field(default_factory=list)

    # translator check
    static_residual: Optional[float] = None
    dynamic_defect: Optional[float] = None

    def recompute_residual_sup(self) -> float:
        values = self.residual_field.values
        return sup_interior(values, self.residual_field.grid, self.interior_margin_cells)

    def to_payload(self) -> Dict[str, Any]:
        return self.model_dump()


def _provenance(grid: Grid, config: RunConfig, run_id: str, started: float, **extra) -> Dict[str, Any]:
    payload = {
        "run_id": run_id,
        "grid": grid.to_dict(),
        "config": config.model_dump(),
        "version": settings.VERSION,
        "wall_time_s": clock.perf_counter() - started,
    }
    payload.update(extra)
    return payload


def check_condition_a(
    u: ScalarField,
    delta: float,
    ghost: Optional[BoundaryClosure] = None,
    time: float = 0.0,
) -> Tuple[bool, float]:
    """margin = (1 - delta) - max spectral radius of D^2u over points at least one cell inside"""

    closure = ghost or BoundaryClosure.periodic_none()
    eig = hessian(u, closure, time).eigenvalues()[u.grid.interior(1)]
    margin = (1.0 - delta) - float(np.max(np.abs(eig)))
    return margin >= -CONDITION_A_ROUNDOFF, margin


def check_condition_b(u: ScalarField) -> float:
    """sup over lambda in {2, 3, 4} and lattice x with lambda x on the lattice of |lambda^-2 u(lambda x) - u(x)|"""

    grid = u.grid
    c = grid.center_index
    if grid.points_per_axis < 9:
        raise GridError("Condition B check needs at least 9 points per axis")

    deviation = 0.0
    for lam in CONDITION_B_SCALES:
        reach = c // lam
        if reach < 1:
            continue
        steps = np.arange(-reach, reach + 1)
        near = np.ix_(*([c + steps] * grid.dim))
        far = np.ix_(*([c + lam * steps] * grid.dim))
        gap = np.abs(u.values[far] / (lam * lam) - u.values[near])
        deviation = max(deviation, float(np.max(gap)))
    return deviation


@dataclass
class Blowdown:
    """Sequence lambda^-2 u(lambda x) on a common window"""

    lambdas: List[float]
    window: Grid
    fields: List[ScalarField]
    interpolated: bool

    def __iter__(self):
        return iter(self.fields)

    def __len__(self):
        return len(self.fields)

    def gaps(self, reference: ScalarField) -> List[float]:
        return [float(np.max(np.abs(f.values - reference.values))) for f in self.fields]


def blowdown(u: ScalarField, lambdas: Sequence[float]) -> Blowdown:
    scales = [float(lam) for lam in lambdas if lam > 0]
    if not scales:
        raise UsageError("blow-down needs at least one positive scale")
    grid = u.grid
    try:
        window = grid.window(grid.radius / max(max(scales), 1.0))
    except GridError as e:
        raise UsageError(f"no common window for scales {scales}: {e}") from e

    points = window.coordinates()
    fields = []
    interpolated = False
    for lam in scales:
        evaluator = scaling_transform(u, lam)
        interpolated |= evaluator.uses_interpolation(points)
        fields.append(ScalarField(window, evaluator(points)))
    if interpolated:
        logger.info("Blow-down used interpolation", scales=scales)
    return Blowdown(scales, window, fields, interpolated)


@dataclass
class ExpanderRun:
    field: ScalarField
    certificate: SolitonCertificate
    report: FlowReport


def build_expander(
    cone: ConeSpec,
    grid: Grid,
    config: RunConfig,
    run_id: str = "expander",
) -> ExpanderRun:
    """Relax the rescaled expander flow from the sampled cone to stationarity"""

    started = clock.perf_counter()
    u0 = sample_cone(cone, grid)
    ok, margin = check_condition_a(u0, config.delta, cone_closure(cone))
    if not ok:
        raise ConditionAViolation(f"cone violates Condition A with delta={config.delta}", margin)

    closure = cone_closure(cone, "expander")
    state, report = run_flow(u0, closure, config, FlowKind.RESCALED_EXPANDER, run_id=run_id)

    v = state.field
    k = config.interior_margin_cells
    residual = expander_residual(v, closure, workers=config.workers)
    residual_sup = sup_interior(residual, grid, k)
    margin_a = check_condition_a(v, config.delta, closure)[1]
    certificate = SolitonCertificate(
        kind="expander",
        residual_sup_interior=residual_sup,
        residual_field=ScalarField(grid, residual),
        condition_a_margin=margin_a,
        d3_sup=d3_sup(v, closure, k),
        passed=residual_sup <= config.residual_tol and margin_a >= -CONDITION_A_TOLERANCE,
        tolerance=config.residual_tol,
        interior_margin_cells=k,
        provenance=_provenance(
            grid, config, run_id, started,
            steps=state.step_count,
            final_time=state.time,
            stationary=state.time < config.s_end,
        ),
    )
    flow_logger.log_certificate("expander", residual_sup, certificate.passed, d3_sup=certificate.d3_sup)
    return ExpanderRun(v, certificate, report)


def make_expander(
    cone: ConeSpec,
    grid: Grid,
    config: RunConfig,
    run_id: str = "expander",
) -> Tuple[ScalarField, SolitonCertificate]:
    run = build_expander(cone, grid, config, run_id)
    certificate = run.certificate
    if certificate.condition_a_margin < -CONDITION_A_TOLERANCE:
        raise ConditionAViolation(
            f"expander Hessian leaves the Condition A bound with delta={config.delta}",
            certificate.condition_a_margin,
        )
    if not certificate.passed:
        raise NonConvergenceError(
            f"expander residual above tolerance {config.residual_tol} by s={config.s_end}",
            certificate.residual_sup_interior,
        )
    return run.field, run.certificate


@dataclass
class ConeRecovery:
    field: ScalarField
    radius: float
    defect_estimate: float


def recover_cone(v: ScalarField, margin_cells: int = 4, window_radius: float = 1.0) -> ConeRecovery:
    """Radial blow-down at the largest usable radius r = R - k h, reported on the unit window"""

    grid = v.grid
    r = grid.radius - margin_cells * grid.spacing
    if r <= window_radius:
        raise GridError(f"extrapolation radius {r} does not exceed the window radius {window_radius}")

    window = grid.window(window_radius)
    x = window.coordinates()
    norm = np.sqrt(np.sum(x * x, axis=0))
    away = norm > 0.5 * grid.spacing

    values = np.zeros(window.shape)
    unit = x[:, away] / norm[away]
    sampled, _ = sample_field(v, r * unit, method="linear")
    values[away] = (norm[away] / r) ** 2 * sampled

    # the radial formula is singular at the origin; continue it by a local quadratic fit
    near = away & (np.max(np.abs(x), axis=0) <= ORIGIN_FIT_CELLS * window.spacing + 1e-12)
    values[window.origin] = fit_quadratic_values(values[near], x[:, near]).constant

    defect = abs(float(v.values[grid.origin])) * float(np.max(norm * norm)) / (r * r)
    return ConeRecovery(ScalarField(window, values), r, defect)


def cone_of_expander(v: ScalarField, margin_cells: int = 4) -> ScalarField:
    return recover_cone(v, margin_cells).field


def probe_shrinker(
    w0: ScalarField,
    reference: QuadraticSoliton,
    grid: Grid,
    config: RunConfig,
    closure: Optional[BoundaryClosure] = None,
    run_id: str = "shrinker",
) -> Tuple[SolitonCertificate, FlowReport]:
    """Run the gauge-projected normalized shrinker flow and measure how fast D^3 dies"""

    if w0.grid != grid:
        raise GridError("initial field does not live on the shrinker grid")
    if reference.kind != "shrinker":
        raise UsageError("shrinker triviality check needs a shrinker reference")
    started = clock.perf_counter()
    ok, margin = check_condition_a(w0, config.delta)
    if not ok:
        raise ConditionAViolation(f"initial data violates Condition A with delta={config.delta}", margin)

    closure = closure or BoundaryClosure.extrapolated()
    tracked = config.model_copy(update={"keep_row_snapshots": True})
    state, report = run_flow(
        w0, closure, tracked, FlowKind.NORMALIZED_SHRINKER, gauge=reference.gauge(), run_id=run_id
    )

    w = state.field
    k = config.interior_margin_cells
    trend = [float(v) for v in report.column("d3_sup")]
    window = grid.window(SHRINKER_FIT_RADIUS)
    fits = [quadratic_fit_distance(report.row_snapshots[row.step].restrict(window)) for row in report.rows]
    if not config.keep_row_snapshots:
        report.row_snapshots.clear()
    residual = shrinker_residual(w, closure, workers=config.workers)

    decayed = trend[-1] <= SHRINKER_DECAY_FACTOR * trend[0] or max(trend) <= FIXED_POINT_D3
    certificate = SolitonCertificate(
        kind="shrinker",
        residual_sup_interior=sup_interior(residual, grid, k),
        residual_field=ScalarField(grid, residual),
        condition_a_margin=check_condition_a(w, config.delta, closure)[1],
        d3_sup=trend[-1],
        passed=decayed,
        tolerance=SHRINKER_DECAY_FACTOR,
        interior_margin_cells=k,
        d3_initial=trend[0],
        d3_trend=trend,
        fit_distance=fits[-1],
        fit_distances=fits,
        provenance=_provenance(grid, config, run_id, started, steps=state.step_count, final_time=state.time),
    )
    flow_logger.log_certificate("shrinker", certificate.residual_sup_interior, decayed, d3_initial=trend[0], d3_final=trend[-1])
    return certificate, report


def _translated(values: np.ndarray, shift: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """values[i - shift] where defined, with the validity mask"""
    out = np.zeros_like(values)
    mask = np.zeros(values.shape, dtype=bool)
    m = values.shape[0]
    target, source = [], []
    for s in shift:
        target.append(slice(max(0, s), m + min(0, s)))
        source.append(slice(max(0, -s), m - max(0, s)))
    out[tuple(target)] = values[tuple(source)]
    mask[tuple(target)] = True
    return out, mask


def check_translator(
    u0: ScalarField,
    a: Sequence[float],
    b: Sequence[float],
    c: float,
    grid: Grid,
    config: RunConfig,
    closure: Optional[BoundaryClosure] = None,
    run_id: str = "translator",
) -> Tuple[SolitonCertificate, FlowReport]:
    """Static translator residual and the dynamic comparison with the translating solution at t_end"""

    if u0.grid != grid:
        raise GridError("initial field does not live on the translator grid")
    started = clock.perf_counter()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = config.interior_margin_cells
    closure = closure or BoundaryClosure.translating(fit_quadratic(u0), a, b, c)

    static = translator_residual(u0, a, b, c, closure, workers=config.workers)
    static_sup = sup_interior(static, grid, k)

    t_end = config.t_end
    cells = a * t_end / grid.spacing
    shift = np.rint(cells)
    if np.any(np.abs(cells - shift) > 1e-9):
        raise UsageError(f"a * t_end = {tuple(a * t_end)} is not a whole number of cells (h = {grid.spacing})")

    state, report = run_flow(u0, closure, config, FlowKind.PHYSICAL, snapshot_times=[t_end], run_id=run_id)
    numeric = report.snapshot(t_end).values

    moved, valid = _translated(u0.values, [int(s) for s in shift])
    coords = grid.coordinates()
    tilt = np.tensordot(b, coords, axes=1)
    exact = moved + t_end * tilt + c * t_end - 0.5 * float(np.dot(a, b)) * t_end * t_end

    inside = np.zeros(grid.shape, dtype=bool)
    inside[grid.interior(k)] = True
    compare = valid & inside
    if not np.any(compare):
        raise GridError("translation leaves no interior points to compare")
    dynamic = float(np.max(np.abs(numeric - exact)[compare]))

    certificate = SolitonCertificate(
        kind="translator",
        residual_sup_interior=static_sup,
        residual_field=ScalarField(grid, static),
        condition_a_margin=check_condition_a(u0, config.delta, closure)[1],
        d3_sup=d3_sup(u0, closure, k),
        passed=static_sup <= config.residual_tol and dynamic <= config.residual_tol,
        tolerance=config.residual_tol,
        interior_margin_cells=k,
        static_residual=static_sup,
        dynamic_defect=dynamic,
        provenance=_provenance(grid, config, run_id, started, steps=state.step_count, final_time=state.time,
                               a=a.tolist(), b=b.tolist(), c=float(c)),
    )
    flow_logger.log_certificate("translator", static_sup, certificate.passed, dynamic_defect=dynamic)
    return certificate, report
