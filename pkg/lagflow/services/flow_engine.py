"""
Time integration of the physical, rescaled expander and normalized shrinker flows
"""

import time as clock
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np
import structlog
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import bicgstab

from lagflow.core.config import RunConfig
from lagflow.core.exceptions import (
    GridError,
    NonConvergenceError,
    NumericalBlowUpError,
    UsageError,
)
from lagflow.core.grid import Grid, ScalarField, sample_field
from lagflow.services.closure import BoundaryClosure, ClosureKind
from lagflow.services.diagnostics import FlowReport, ReportRow, d3_sup, d4_sup
from lagflow.services.fitting import quadratic_fit_distance
from lagflow.services.kernels import angle_batch, linearization_batch
from lagflow.services.operator import (
    expander_residual,
    first_differences,
    hessian,
    one_sided_drift,
    second_differences,
    self_similar_residual,
    shifted,
    shrinker_residual,
    sup_interior,
)
from lagflow.services.tiling import map_pointwise
from lagflow.utils.logging import flow_logger

logger = structlog.get_logger()

CONDITION_A_ROUNDOFF = 1e-12


class FlowKind(str, Enum):
    PHYSICAL = "physical"
    RESCALED_EXPANDER = "rescaled_expander"
    NORMALIZED_SHRINKER = "normalized_shrinker"


@dataclass(frozen=True)
class FlowState:
    """Field at one instant: t for the physical flow, s for the rescaled flows"""

    field: ScalarField
    time: float
    step_count: int
    config: RunConfig


@dataclass(frozen=True)
class GaugeReference:
    """Value and gradient at the origin that the shrinker gauge pins the field to"""

    value: float
    gradient: Tuple[float, ...]

    @classmethod
    def of_field(cls, field: ScalarField) -> "GaugeReference":
        return cls(_origin_value(field.values, field.grid), tuple(_origin_gradient(field.values, field.grid)))


def _origin_value(values: np.ndarray, grid: Grid) -> float:
    return float(values[grid.origin])


def _origin_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    c = grid.center_index
    grad = np.empty(grid.dim)
    for i in range(grid.dim):
        plus = list(grid.origin)
        minus = list(grid.origin)
        plus[i] = c + 1
        minus[i] = c - 1
        grad[i] = (values[tuple(plus)] - values[tuple(minus)]) / (2.0 * grid.spacing)
    return grad


class FlowEngine:
    """Explicit RK2 (midpoint) stepping of one flow kind on a fixed grid"""

    def __init__(
        self,
        grid: Grid,
        closure: BoundaryClosure,
        config: RunConfig,
        kind: FlowKind = FlowKind.PHYSICAL,
        gauge: Optional[GaugeReference] = None,
    ):
        if closure.kind == ClosureKind.PERIODIC_NONE:
            raise UsageError("time stepping needs ghost values; PERIODIC_NONE supplies none")
        kind = FlowKind(kind)
        if config.integrator == "linearized_implicit" and kind != FlowKind.PHYSICAL:
            raise UsageError("the linearized implicit integrator is only available for the physical flow")

        self.grid = grid
        self.closure = closure
        self.config = config
        self.kind = kind
        self.gauge = gauge
        self.h = grid.spacing
        self._coords = np.moveaxis(grid.coordinates(), 0, -1)
        sign = 1.0 if kind == FlowKind.RESCALED_EXPANDER else -1.0
        self._drift_velocity = 0.5 * sign * grid.coordinates()

    @property
    def time_step(self) -> float:
        n, h, safety = self.grid.dim, self.h, self.config.dt_safety
        diffusion = h * h / (2.0 * n)
        if self.kind == FlowKind.PHYSICAL:
            if self.config.integrator == "linearized_implicit":
                return safety * diffusion * self.config.implicit_dt_multiplier
            return safety * diffusion
        drift = h / max(0.5 * self.grid.radius, h)
        return safety * min(diffusion, drift)

    def rhs(self, values: np.ndarray, time: float) -> np.ndarray:
        padded = self.closure.pad(values, self.grid, time, width=1)
        curvature = second_differences(padded, self.h)
        g = map_pointwise(angle_batch, curvature, 2, self.config.workers)
        if self.kind == FlowKind.PHYSICAL:
            return g

        if self.config.drift_scheme == "upwind":
            drift = one_sided_drift(padded, self.h, self._drift_velocity)
        else:
            grad = first_differences(padded, self.h)
            drift = np.sum(np.moveaxis(self._drift_velocity, 0, -1) * grad, axis=-1)

        if self.kind == FlowKind.RESCALED_EXPANDER:
            return g - values + drift
        return g + values + drift

    def advance(self, state: FlowState, dt: float) -> FlowState:
        """One step of size dt"""

        if self.config.integrator == "linearized_implicit":
            new = self._implicit_increment(state, dt)
        else:
            u = state.field.values
            t = state.time
            k1 = self.rhs(u, t)
            mid = u + 0.5 * dt * k1
            k2 = self.rhs(mid, t + 0.5 * dt)
            new = u + dt * k2

        if self.kind == FlowKind.NORMALIZED_SHRINKER:
            new = self._project_gauge(new)

        self._check_finite(new, state.step_count + 1)
        return FlowState(state.field.with_values(new), state.time + dt, state.step_count + 1, state.config)

    def step(self, state: FlowState) -> FlowState:
        return self.advance(state, self.time_step)

    def _project_gauge(self, values: np.ndarray) -> np.ndarray:
        """Remove the constant and linear modes relative to the gauge reference"""
        if self.gauge is None:
            return values
        value = _origin_value(values, self.grid) - self.gauge.value
        slope = _origin_gradient(values, self.grid) - np.asarray(self.gauge.gradient)
        return values - value - self._coords @ slope

    def _check_finite(self, values: np.ndarray, step: int):
        bad = ~np.isfinite(values) | (np.abs(values) > self.config.blowup_threshold)
        if np.any(bad):
            location = tuple(int(i) for i in np.argwhere(bad)[0])
            flow_logger.log_error("flow", "blow-up", {"step": step, "index": location})
            raise NumericalBlowUpError("field became non-finite or exceeded the blow-up threshold", step, location)

    def _implicit_increment(self, state: FlowState, dt: float) -> np.ndarray:
        """Linearized backward Euler: (I - dt a:D^2) delta = dt G(D^2u), a = (I + A^2)^-1 frozen"""

        grid, h = self.grid, self.h
        u = state.field.values
        padded = self.closure.pad(u, grid, state.time, width=1)
        ghost_step = self.closure.pad(u, grid, state.time + dt, width=1) - padded
        curvature = second_differences(padded, h)
        g = map_pointwise(angle_batch, curvature, 2, self.config.workers)
        coeff = map_pointwise(linearization_batch, curvature, 2, self.config.workers)

        count = grid.size
        index = np.arange(count).reshape(grid.shape)
        padded_index = np.full(padded.shape, -1, dtype=np.int64)
        padded_index[(slice(1, -1),) * grid.dim] = index

        diagonal = np.ones(grid.shape)
        rhs = dt * g
        rows, cols, vals = [], [], []

        def couple(weight: np.ndarray, offsets: dict):
            # weight multiplies the neighbour's increment in the operator a:D^2
            neighbour = shifted(padded_index, offsets)
            inside = neighbour >= 0
            rows.append(index[inside])
            cols.append(neighbour[inside])
            vals.append(-dt * weight[inside])
            outside = ~inside
            rhs[outside] += dt * weight[outside] * shifted(ghost_step, offsets)[outside]

        for i in range(grid.dim):
            w = coeff[..., i, i] / (h * h)
            diagonal += 2.0 * dt * w
            couple(w, {i: 1})
            couple(w, {i: -1})
            for j in range(i + 1, grid.dim):
                w = coeff[..., i, j] / (2.0 * h * h)
                couple(w, {i: 1, j: 1})
                couple(w, {i: -1, j: -1})
                couple(-w, {i: 1, j: -1})
                couple(-w, {i: -1, j: 1})

        matrix = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(count, count),
        ).tocsr() + diags(diagonal.ravel())
        preconditioner = diags(1.0 / matrix.diagonal())

        delta, info = bicgstab(
            matrix,
            rhs.ravel(),
            rtol=self.config.implicit_rtol,
            atol=0.0,
            M=preconditioner,
            maxiter=10 * count,
        )
        if info != 0:
            residual = float(np.linalg.norm(matrix @ delta - rhs.ravel()) / max(np.linalg.norm(rhs), 1e-300))
            raise NonConvergenceError(f"implicit solve stopped with status {info}", residual)
        return u + delta.reshape(grid.shape)


def step_physical(state: FlowState, closure: BoundaryClosure, dt: Optional[float] = None) -> FlowState:
    """One step of du/dt = G(D^2u)"""
    engine = FlowEngine(state.field.grid, closure, state.config, FlowKind.PHYSICAL)
    return engine.advance(state, engine.time_step if dt is None else dt)


def step_rescaled_expander(state: FlowState, closure: BoundaryClosure, dt: Optional[float] = None) -> FlowState:
    """One step of dv/ds = G(D^2v) - v + 1/2 x.grad v"""
    engine = FlowEngine(state.field.grid, closure, state.config, FlowKind.RESCALED_EXPANDER)
    return engine.advance(state, engine.time_step if dt is None else dt)


def step_normalized_shrinker(
    state: FlowState,
    closure: BoundaryClosure,
    gauge: Optional[GaugeReference] = None,
    dt: Optional[float] = None,
) -> FlowState:
    """One step of dw/ds = G(D^2w) + w - 1/2 y.grad w, followed by the gauge projection"""
    engine = FlowEngine(state.field.grid, closure, state.config, FlowKind.NORMALIZED_SHRINKER, gauge)
    return engine.advance(state, engine.time_step if dt is None else dt)


def _rescaled_values(field: ScalarField, points: np.ndarray, t: float) -> Tuple[np.ndarray, bool]:
    values, interpolated = sample_field(field, np.sqrt(t) * points)
    return values / t, interpolated


def self_similarity_gap(f1: ScalarField, t1: float, f2: ScalarField, t2: float, margin: int) -> float:
    """sup |t1^-1 u(sqrt(t1) x, t1) - t2^-1 u(sqrt(t2) x, t2)| over the window both evaluations reach"""

    if t1 == t2:
        return 0.0
    if t1 <= 0 or t2 <= 0:
        raise UsageError("self-similarity comparison needs positive times")
    grid = f1.grid
    reach = (grid.radius - margin * grid.spacing) / np.sqrt(max(t1, t2))
    window = grid.window(reach)
    points = window.coordinates()
    a, _ = _rescaled_values(f1, points, t1)
    b, _ = _rescaled_values(f2, points, t2)
    return float(np.max(np.abs(a - b)))


def self_similarity_defect(report: FlowReport, t1: float, t2: float) -> float:
    """Self-similarity defect between the snapshots at t1 and t2"""
    if t1 == t2:
        report.snapshot(t1)
        return 0.0
    return self_similarity_gap(report.snapshot(t1), t1, report.snapshot(t2), t2, report.margin)


@dataclass(frozen=True)
class ScaledEvaluator:
    """x -> lambda^-2 u(lambda x); pair with time lambda^2 t for time-dependent comparisons"""

    field: ScalarField
    factor: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        values, _ = sample_field(self.field, self.factor * np.asarray(points, dtype=float))
        return values / (self.factor * self.factor)

    def uses_interpolation(self, points: np.ndarray) -> bool:
        return sample_field(self.field, self.factor * np.asarray(points, dtype=float))[1]

    def window(self) -> Grid:
        """Largest lattice window whose scaled image stays in the domain"""
        grid = self.field.grid
        return grid.window(grid.radius / max(self.factor, 1.0))

    def on_window(self) -> ScalarField:
        window = self.window()
        return ScalarField(window, self(window.coordinates()))


def scaling_transform(u: ScalarField, lam: float) -> ScaledEvaluator:
    if not lam > 0:
        raise GridError(f"scale factor must be positive, got {lam}")
    return ScaledEvaluator(u, float(lam))


class _Recorder:
    """Builds report rows; norms are recomputed from the recorded field"""

    def __init__(self, engine: FlowEngine, report: FlowReport):
        self.engine = engine
        self.report = report
        self.margin = engine.config.interior_margin_cells
        self.previous: Optional[Tuple[float, ScalarField]] = None

    def row(self, state: FlowState, change_rate: float) -> ReportRow:
        field, t, closure = state.field, state.time, self.engine.closure
        kind = self.engine.kind
        grid = field.grid
        workers = self.engine.config.workers

        lo, hi = hessian(field, closure, t).spectrum_range(self.margin)
        if kind == FlowKind.PHYSICAL:
            residual = self_similar_residual(field, closure, t, workers)
            residual_sup = sup_interior(residual, grid, self.margin) if t > 0 else float("nan")
        elif kind == FlowKind.RESCALED_EXPANDER:
            residual_sup = sup_interior(expander_residual(field, closure, t, workers), grid, self.margin)
        else:
            residual_sup = sup_interior(shrinker_residual(field, closure, t, workers), grid, self.margin)

        d3 = d3_sup(field, closure, self.margin, t)
        if kind == FlowKind.PHYSICAL:
            d3_sqrt_t = d3 * np.sqrt(t)
            defect = float("nan")
            if self.previous is not None and self.previous[0] > 0 and t > 0:
                defect = self_similarity_gap(self.previous[1], self.previous[0], field, t, self.margin)
            self.previous = (t, field)
        else:
            d3_sqrt_t = float("nan")
            defect = quadratic_fit_distance(field, self.margin)

        row = ReportRow(
            step=state.step_count,
            time=float(t),
            residual_sup=float(residual_sup),
            hess_min=lo,
            hess_max=hi,
            d3_sup=d3,
            d3_sqrt_t=float(d3_sqrt_t),
            defect=float(defect),
            change_rate=float(change_rate),
        )
        if self.engine.config.monitor_d4:
            row.d4_sup = d4_sup(field, closure, self.margin, t)
            row.d4_t = row.d4_sup * t if kind == FlowKind.PHYSICAL else float("nan")
        return row

    def record(self, state: FlowState, change_rate: float):
        snapshot = state.field if self.engine.config.keep_row_snapshots else None
        self.report.append(self.row(state, change_rate), snapshot)


def _condition_a_margin(u0: ScalarField, closure: BoundaryClosure, delta: float, time: float) -> float:
    eig = hessian(u0, closure, time).eigenvalues()[u0.grid.interior(1)]
    return (1.0 - delta) - float(np.max(np.abs(eig)))


def run_flow(
    u0: ScalarField,
    closure: BoundaryClosure,
    config: RunConfig,
    kind: FlowKind = FlowKind.PHYSICAL,
    snapshot_times: Iterable[float] = (),
    gauge: Optional[GaugeReference] = None,
    run_id: str = "run",
    start_time: float = 0.0,
    end_time: Optional[float] = None,
) -> Tuple[FlowState, FlowReport]:
    """Iterate the flow to t_end / s_end, or to stationarity for the rescaled kinds"""

    kind = FlowKind(kind)
    grid = u0.grid
    if kind == FlowKind.NORMALIZED_SHRINKER and gauge is None:
        gauge = GaugeReference.of_field(u0)
    engine = FlowEngine(grid, closure, config, kind, gauge)

    if end_time is None:
        end_time = config.t_end if kind == FlowKind.PHYSICAL else config.s_end
    if end_time <= start_time:
        raise UsageError(f"end time {end_time} must exceed start time {start_time}")

    margin_a = _condition_a_margin(u0, closure, config.delta, start_time)
    if margin_a < -CONDITION_A_ROUNDOFF:
        logger.warning("Initial data violates Condition A", margin=margin_a, delta=config.delta)

    flow_logger.log_run_start(
        run_id,
        kind.value,
        grid=grid.to_dict(),
        time_step=engine.time_step,
        end_time=end_time,
        closure=closure.kind.value,
        workers=config.workers,
    )
    started = clock.perf_counter()

    report = FlowReport(
        kind=kind.value,
        grid=grid,
        closure=closure,
        margin=config.interior_margin_cells,
        with_d4=config.monitor_d4,
    )
    recorder = _Recorder(engine, report)

    tolerance = 1e-12 * max(1.0, abs(end_time))
    targets = sorted({float(t) for t in snapshot_times if start_time < t <= end_time + tolerance})
    if any(abs(t - start_time) <= tolerance for t in snapshot_times):
        report.add_snapshot(start_time, u0)

    state = FlowState(u0, float(start_time), 0, config)
    recorder.record(state, float("nan"))
    change_rate = float("nan")
    stable = 0
    reason = "end_time"

    while state.time < end_time - tolerance:
        stop_at = min(targets[0] if targets else end_time, end_time)
        dt = engine.time_step
        landing = state.time + dt >= stop_at - tolerance
        if landing:
            dt = stop_at - state.time

        previous = state.field.values
        state = engine.advance(state, dt)
        if landing:
            state = replace(state, time=stop_at)
        change_rate = float(np.max(np.abs(state.field.values - previous)[grid.interior(config.interior_margin_cells)])) / dt

        while targets and abs(targets[0] - state.time) <= tolerance:
            report.add_snapshot(targets.pop(0), state.field)

        if state.step_count % config.snapshot_stride == 0:
            recorder.record(state, change_rate)
            flow_logger.log_step(run_id, state.step_count, state.time, change_rate)

        if kind != FlowKind.PHYSICAL:
            stable = stable + 1 if change_rate <= config.stationarity_tol else 0
            if stable >= config.stationarity_checks:
                reason = "stationary"
                break

    if report.rows[-1].step != state.step_count:
        recorder.record(state, change_rate)

    elapsed = clock.perf_counter() - started
    flow_logger.log_run_end(run_id, state.step_count, state.time, reason, residual_sup=report.final.residual_sup)
    flow_logger.log_performance("run_flow", elapsed, run_id=run_id, steps=state.step_count)
    return state, report
