"""
Derivative-norm monitors, minimality diagnostic and the FlowReport record
"""

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog

from lagflow.core.exceptions import GridError, MissingSnapshotError, ReportError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.closure import BoundaryClosure
from lagflow.services.operator import first_differences, gradient, hessian, second_differences
from lagflow.utils.io import write_frame

logger = structlog.get_logger()

REPORT_COLUMNS = [
    "step",
    "time",
    "residual_sup",
    "hess_min",
    "hess_max",
    "d3_sup",
    "d3_sqrt_t",
    "defect",
    "change_rate",
]
D4_COLUMNS = ["d4_sup", "d4_t"]

TREND_TRANSIENT_STEPS = 10
TREND_RTOL = 1e-9
TREND_ATOL = 1e-14
# on a self-similar profile |D^3u| sqrt t is constant up to the stencil's O(h^2 / t) bias
TREND_SNAPSHOT_RTOL = 1e-2


@dataclass
class ReportRow:
    step: int
    time: float
    residual_sup: float
    hess_min: float
    hess_max: float
    d3_sup: float
    d3_sqrt_t: float
    defect: float
    change_rate: float
    d4_sup: float = math.nan
    d4_t: float = math.nan


@dataclass
class FlowReport:
    """Time series of monitored quantities, plus optional field snapshots"""

    kind: str
    grid: Grid
    closure: BoundaryClosure
    margin: int
    rows: List[ReportRow] = field(default_factory=list)
    snapshots: Dict[float, ScalarField] = field(default_factory=dict)
    row_snapshots: Dict[int, ScalarField] = field(default_factory=dict)
    with_d4: bool = False

    def append(self, row: ReportRow, snapshot: Optional[ScalarField] = None):
        if self.rows and row.step <= self.rows[-1].step:
            raise ReportError(f"report rows must increase in step: {row.step} after {self.rows[-1].step}")
        self.rows.append(row)
        if snapshot is not None:
            self.row_snapshots[row.step] = snapshot

    def add_snapshot(self, time: float, snapshot: ScalarField):
        self.snapshots[float(time)] = snapshot

    def snapshot(self, time: float, atol: float = 1e-12) -> ScalarField:
        for recorded, snap in self.snapshots.items():
            if abs(recorded - time) <= atol * max(1.0, abs(time)):
                return snap
        raise MissingSnapshotError(f"no snapshot recorded at time {time}; have {sorted(self.snapshots)}")

    def column(self, name: str) -> np.ndarray:
        return np.asarray([getattr(row, name) for row in self.rows], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        columns = REPORT_COLUMNS + (D4_COLUMNS if self.with_d4 else [])
        frame = pd.DataFrame([asdict(row) for row in self.rows], columns=[f.name for f in fields(ReportRow)])
        return frame[columns]

    @property
    def final(self) -> ReportRow:
        if not self.rows:
            raise ReportError("report has no rows")
        return self.rows[-1]


def _derivative_norm(tensor: np.ndarray, grid: Grid, margin: int) -> float:
    window = grid.interior(margin)
    axes = tuple(range(grid.dim, tensor.ndim))
    norms = np.sqrt(np.sum(tensor * tensor, axis=axes))
    return float(np.max(norms[window]))


def third_derivatives(u: ScalarField, ghost: BoundaryClosure, time: float = 0.0) -> np.ndarray:
    """All centered third differences, shape (m, ..., m, n, n, n), by differencing the Hessian stencil"""
    padded = ghost.pad(u.values, u.grid, time, width=2)
    h = u.grid.spacing
    extended = second_differences(padded, h)
    n = u.grid.dim
    components = [first_differences(extended[..., i, j], h) for i in range(n) for j in range(n)]
    return np.stack(components, axis=-2).reshape(u.grid.shape + (n, n, n))


def fourth_derivatives(u: ScalarField, ghost: BoundaryClosure, time: float = 0.0) -> np.ndarray:
    """Hessian stencil applied to every Hessian entry, shape (m, ..., m, n, n, n, n)"""
    padded = ghost.pad(u.values, u.grid, time, width=2)
    h = u.grid.spacing
    extended = second_differences(padded, h)
    n = u.grid.dim
    components = [second_differences(extended[..., i, j], h) for i in range(n) for j in range(n)]
    return np.stack(components, axis=-3).reshape(u.grid.shape + (n, n, n, n))


def d3_sup(u: ScalarField, ghost: BoundaryClosure, margin: int = 2, time: float = 0.0) -> float:
    """Sup over the interior of the Euclidean norm of D^3u"""
    if u.grid.points_per_axis < 7:
        raise GridError("third-derivative monitor needs at least 7 points per axis")
    return _derivative_norm(third_derivatives(u, ghost, time), u.grid, max(margin, 2))


def d4_sup(u: ScalarField, ghost: BoundaryClosure, margin: int = 2, time: float = 0.0) -> float:
    """Sup of |D^4u|; noisy at coarse resolution"""
    if u.grid.points_per_axis < 7:
        raise GridError("fourth-derivative monitor needs at least 7 points per axis")
    return _derivative_norm(fourth_derivatives(u, ghost, time), u.grid, max(margin, 2))


def decay_monitor(report: FlowReport, l: int = 3, times: Optional[Sequence[float]] = None) -> Tuple[float, bool]:
    """Empirical constant sup_t |D^l u| t^((l-2)/2) and whether it is non-increasing after the transient

    With `times` the scaled norm is recomputed from the snapshots at those times
    and the trend is judged there, with a relative allowance of TREND_SNAPSHOT_RTOL.
    """

    if l not in (3, 4):
        raise ReportError(f"decay monitor supports l = 3 or 4, got {l}")
    if report.kind != "physical":
        raise ReportError("decay monitor needs a physical-flow report")
    if len(report.rows) < 2:
        raise ReportError(f"decay monitor needs at least 2 rows, report has {len(report.rows)}")

    if times is not None:
        return _snapshot_decay(report, l, sorted(float(t) for t in times))

    column = "d3_sqrt_t" if l == 3 else "d4_t"
    rows = [r for r in report.rows if r.time > 0 and np.isfinite(getattr(r, column))]
    if not rows:
        raise ReportError(f"report has no rows with t > 0 and a finite {column}")

    values = np.asarray([getattr(r, column) for r in rows])
    constant = float(np.max(values))

    late = np.asarray([getattr(r, column) for r in rows if r.step >= TREND_TRANSIENT_STEPS])
    trend = bool(np.all(late[1:] <= late[:-1] * (1.0 + TREND_RTOL) + TREND_ATOL)) if late.size else True

    logger.info("Decay monitor", l=l, constant=constant, non_increasing=trend, rows=len(rows))
    return constant, trend


def _snapshot_decay(report: FlowReport, l: int, times: List[float]) -> Tuple[float, bool]:
    if not times or times[0] <= 0:
        raise ReportError("snapshot decay monitor needs positive snapshot times")
    norm = d3_sup if l == 3 else d4_sup
    power = 0.5 * (l - 2)
    values = np.asarray([norm(report.snapshot(t), report.closure, report.margin, t) * t**power for t in times])
    constant = float(np.max(values))
    trend = bool(np.all(values[1:] <= values[:-1] * (1.0 + TREND_SNAPSHOT_RTOL) + TREND_ATOL))
    logger.info("Decay monitor", l=l, constant=constant, non_increasing=trend, times=times, values=values.tolist())
    return constant, trend


def minimality_defect(u: ScalarField, ghost: BoundaryClosure, margin: int = 1, time: float = 0.0) -> float:
    """sup |G(D^2u) - mean G(D^2u)| over the interior"""
    g = hessian(u, ghost, time).angles()[u.grid.interior(max(margin, 1))]
    mean = math.fsum(g.ravel().tolist()) / g.size
    return float(np.max(np.abs(g - mean)))


def gradient_drift(u: ScalarField, u0: ScalarField, ghost: BoundaryClosure, margin: int = 1, time: float = 0.0) -> float:
    """sup |Du(., t) - Du0| over the interior; the initial gradient uses the closure at t = 0"""
    window = u.grid.interior(max(margin, 1))
    du = gradient(u, ghost, time)[window]
    du0 = gradient(u0, ghost, 0.0)[window]
    return float(np.max(np.sqrt(np.sum((du - du0) ** 2, axis=-1))))


def graph_points(u: ScalarField, ghost: BoundaryClosure, margin: int = 0, time: float = 0.0) -> pd.DataFrame:
    """Lagrangian graph {(x, Du(x))} over the interior as a table"""
    window = u.grid.interior(margin)
    coords = u.grid.coordinates()
    grad = gradient(u, ghost, time)
    data = {f"x{i + 1}": coords[i][window].ravel() for i in range(u.grid.dim)}
    data.update({f"du{i + 1}": grad[window + (i,)].ravel() for i in range(u.grid.dim)})
    return pd.DataFrame(data)


def graph_export(u: ScalarField, ghost: BoundaryClosure, path: Path, margin: int = 0, time: float = 0.0) -> Path:
    """Write the Lagrangian graph point cloud as CSV"""
    frame = graph_points(u, ghost, margin, time)
    write_frame(frame, path)
    logger.info("Graph exported", path=str(path), rows=len(frame))
    return Path(path)
