"""
convergence-study command: h-halving at fixed R and R-doubling at fixed h
"""

import argparse
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import structlog

from lagflow.commands.common import (
    CommandResult,
    RunContext,
    add_common_arguments,
    build_context,
    emit,
    parse_numbers,
)
from lagflow.commands.flow import Bump, run_physical
from lagflow.core.cone import ConeSpec
from lagflow.core.exceptions import EXIT_OK, EXIT_TOLERANCE, UsageError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.solitons import build_expander
from lagflow.utils.io import write_frame

logger = structlog.get_logger()

MIN_ORDER = 1.8
MAX_DOMAIN_RATIO = 2.0
NOISE_FLOOR_FACTOR = 10.0

H_LEVELS = (33, 65, 129)
H_RADIUS = 4.0
H_TIME = 0.5
H_BUMP = Bump(center=(0.0, 0.0), amplitude=0.1, width=0.75)
DOMAIN_RADII = (4.0, 8.0, 16.0)


@dataclass
class StudyRow:
    study: str
    R: float
    m: int
    h: float
    value: float
    rate: float = float("nan")


def _subsample(field: ScalarField, stride: int) -> np.ndarray:
    return field.values[(slice(None, None, stride),) * field.grid.dim]


def _child(ctx: RunContext, grid: Grid, cone: ConeSpec, suffix: str, **config) -> RunContext:
    return replace(
        ctx,
        grid=grid,
        cone=cone,
        config=ctx.config.model_copy(update=config),
        run_id=f"{ctx.run_id}.{suffix}",
    )


def h_halving(ctx: RunContext, cone: ConeSpec, levels: Sequence[int] = H_LEVELS) -> List[StudyRow]:
    """Physical flow of cone + bump at m, 2m-1, 4m-3: successive differences on the coarse lattice"""

    levels = sorted(int(m) for m in levels)
    if len(levels) < 3 or any(b != 2 * a - 1 for a, b in zip(levels, levels[1:])):
        raise UsageError(f"h-halving needs at least three nested levels m, 2m-1, 4m-3, got {levels}")

    bump = replace(H_BUMP, center=(0.0,) * cone.dim)
    fields = []
    for m in levels:
        grid = Grid(dim=cone.dim, radius=H_RADIUS, points_per_axis=m)
        child = _child(ctx, grid, cone, f"m{m}", t_end=H_TIME)
        fields.append(run_physical(child, bump=bump).state.field)

    coarse = fields[0].grid
    window = coarse.interior(ctx.config.interior_margin_cells)
    rows = []
    differences = []
    for k in range(len(levels) - 1):
        a = _subsample(fields[k], 2**k)
        b = _subsample(fields[k + 1], 2 ** (k + 1))
        diff = float(np.max(np.abs(a - b)[window]))
        differences.append(diff)
        rate = float(np.log2(differences[-2] / diff)) if k > 0 and diff > 0 else float("nan")
        rows.append(StudyRow("h", H_RADIUS, levels[k], fields[k].grid.spacing, diff, rate))
    return rows


def r_doubling(ctx: RunContext, cone: ConeSpec, radii: Sequence[float] = DOMAIN_RADII) -> List[StudyRow]:
    """Expander residual at fixed spacing h while the domain half-width doubles"""

    h = ctx.grid.spacing
    rows = []
    for R in sorted(radii):
        cells = R / h
        if abs(cells - round(cells)) > 1e-9:
            raise UsageError(f"R = {R} is not a whole number of cells of h = {h}")
        grid = Grid(dim=cone.dim, radius=float(R), points_per_axis=2 * int(round(cells)) + 1)
        child = _child(ctx, grid, cone, f"R{R:g}")
        run = build_expander(cone, grid, child.config, child.run_id)
        value = run.certificate.residual_sup_interior
        rate = value / rows[-1].value if rows and rows[-1].value > 0 else float("nan")
        rows.append(StudyRow("R", float(R), grid.points_per_axis, h, value, rate))
    return rows


def domain_stable(rows: List[StudyRow], noise_floor: float) -> bool:
    for prev, row in zip(rows, rows[1:]):
        if row.value <= noise_floor and prev.value <= noise_floor:
            continue
        if not row.rate < MAX_DOMAIN_RATIO:
            return False
    return True


def run_study(
    ctx: RunContext,
    levels: Sequence[int] = H_LEVELS,
    radii: Optional[Sequence[float]] = DOMAIN_RADII,
) -> CommandResult:
    cone = ctx.cone or ConeSpec.two_sector()
    smooth = ConeSpec.quadratic(cone.sectors[0].hessian)

    rows = h_halving(ctx, smooth, levels)
    orders = [r.rate for r in rows if np.isfinite(r.rate)]
    order = min(orders) if orders else float("nan")
    passed = order >= MIN_ORDER
    metrics = {"observed_order": order, "order_passed": passed}

    if radii:
        domain = r_doubling(ctx, cone, radii)
        stable = domain_stable(domain, NOISE_FLOOR_FACTOR * ctx.config.stationarity_tol)
        metrics.update(domain_residuals=[r.value for r in domain], domain_stable=stable)
        passed = passed and stable
        rows += domain

    frame = pd.DataFrame([vars(r) for r in rows], columns=["study", "R", "m", "h", "value", "rate"])
    outputs = {
        "study": str(write_frame(frame, ctx.path("study.csv"))),
        "manifest": str(ctx.manifest(levels=list(levels), radii=list(radii or []), passed=passed)),
    }
    logger.info("Convergence study finished", order=order, passed=passed)
    exit_code = EXIT_OK if passed else EXIT_TOLERANCE
    return CommandResult(command=ctx.command, run_id=ctx.run_id, exit_code=exit_code, outputs=outputs, metrics=metrics)


def handle(args: argparse.Namespace) -> int:
    ctx = build_context(args, require_cone=False)
    levels = [int(m) for m in parse_numbers(args.levels, "levels")] or list(H_LEVELS)
    radii = None if args.skip_domain else (parse_numbers(args.radii, "radii") or list(DOMAIN_RADII))
    return emit(run_study(ctx, levels, radii))


def register(subparsers):
    parser = subparsers.add_parser("convergence-study", help="spatial order under h-halving and truncation under R-doubling")
    add_common_arguments(parser)
    parser.add_argument("--levels", help="nested points per axis for h-halving (default 33,65,129)")
    parser.add_argument("--radii", help="domain half-widths for R-doubling (default 4,8,16)")
    parser.add_argument("--skip-domain", action="store_true", help="run the h-halving part only")
    parser.set_defaults(handler=handle)
