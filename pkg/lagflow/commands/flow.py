"""
flow and rescaled-flow commands
"""

import argparse
from dataclasses import dataclass
from typing import Optional, Sequence

import structlog

from lagflow.commands.common import (
    CommandResult,
    RunContext,
    add_common_arguments,
    build_context,
    condition_a_slack,
    emit,
    parse_numbers,
    parse_vector,
)
from lagflow.core.cone import add_compact_bump, sample_cone
from lagflow.core.exceptions import EXIT_OK
from lagflow.core.grid import ScalarField
from lagflow.services.closure import BoundaryClosure, cone_closure
from lagflow.services.diagnostics import FlowReport, gradient_drift, graph_export
from lagflow.services.flow_engine import FlowKind, FlowState, run_flow
from lagflow.services.kernels import angle
from lagflow.services.operator import sup_interior

logger = structlog.get_logger()


@dataclass
class Bump:
    center: Sequence[float]
    amplitude: float
    width: float


@dataclass
class FlowOutcome:
    result: CommandResult
    initial: ScalarField
    state: FlowState
    report: FlowReport


def _initial_field(ctx: RunContext, bump: Optional[Bump]) -> ScalarField:
    u0 = sample_cone(ctx.cone, ctx.grid)
    if bump is not None:
        u0 = add_compact_bump(u0, bump.center, bump.amplitude, bump.width)
    return u0


def _parse_bump(args: argparse.Namespace, dim: int) -> Optional[Bump]:
    if args.bump_amplitude is None:
        return None
    center = parse_vector(args.bump_center, dim, "bump-center") or [0.0] * dim
    return Bump(center, args.bump_amplitude, args.bump_width)


def run_physical(
    ctx: RunContext,
    bump: Optional[Bump] = None,
    snapshot_times: Sequence[float] = (),
    closure: Optional[BoundaryClosure] = None,
    graph: bool = False,
) -> FlowOutcome:
    """Physical flow from the sampled cone (plus an optional bump) to t_end"""

    u0 = _initial_field(ctx, bump)
    closure = closure or cone_closure(ctx.cone)
    state, report = run_flow(
        u0, closure, ctx.config, FlowKind.PHYSICAL, snapshot_times=snapshot_times, run_id=ctx.run_id
    )

    k = ctx.config.interior_margin_cells
    metrics = {
        "steps": state.step_count,
        "final_time": state.time,
        "report_rows": len(report.rows),
        "hess_min": min(r.hess_min for r in report.rows),
        "hess_max": max(r.hess_max for r in report.rows),
        "gradient_drift": gradient_drift(state.field, u0, closure, k, state.time),
        "condition_a_slack": condition_a_slack(report, ctx.config),
    }
    # quadratic data moves by t * G(A) exactly
    if ctx.cone.is_quadratic() and bump is None:
        exact = u0.values + state.time * angle(ctx.cone.sectors[0].hessian)
        metrics["exact_error_sup"] = sup_interior(state.field.values - exact, ctx.grid, k)

    outputs = {
        "report": str(ctx.write_report(report)),
        "final": str(ctx.write_snapshot(state.field, "final")),
    }
    outputs.update(ctx.write_snapshots(report))
    if graph:
        outputs["graph"] = str(graph_export(state.field, closure, ctx.path("graph.csv"), k, state.time))
    outputs["manifest"] = str(
        ctx.manifest(
            kind=FlowKind.PHYSICAL.value,
            closure=closure.kind.value,
            bump=None if bump is None else vars(bump),
            snapshot_times=list(snapshot_times),
        )
    )

    result = CommandResult(command=ctx.command, run_id=ctx.run_id, exit_code=EXIT_OK, outputs=outputs, metrics=metrics)
    return FlowOutcome(result, u0, state, report)


def run_rescaled(ctx: RunContext, kind: FlowKind, bump: Optional[Bump] = None) -> FlowOutcome:
    """Rescaled expander or normalized shrinker flow up to s_end or stationarity"""

    u0 = _initial_field(ctx, bump)
    if kind == FlowKind.RESCALED_EXPANDER:
        closure = cone_closure(ctx.cone, "expander")
    else:
        closure = BoundaryClosure.extrapolated()
    state, report = run_flow(u0, closure, ctx.config, kind, run_id=ctx.run_id)

    final = report.final
    metrics = {
        "steps": state.step_count,
        "final_time": state.time,
        "stationary": state.time < ctx.config.s_end,
        "residual_sup": final.residual_sup,
        "d3_sup": final.d3_sup,
        "fit_distance": final.defect,
        "condition_a_slack": condition_a_slack(report, ctx.config),
    }
    outputs = {
        "report": str(ctx.write_report(report)),
        "final": str(ctx.write_snapshot(state.field, "final")),
        "manifest": str(
            ctx.manifest(kind=kind.value, closure=closure.kind.value, bump=None if bump is None else vars(bump))
        ),
    }
    result = CommandResult(command=ctx.command, run_id=ctx.run_id, exit_code=EXIT_OK, outputs=outputs, metrics=metrics)
    return FlowOutcome(result, u0, state, report)


def handle_flow(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    outcome = run_physical(
        ctx,
        bump=_parse_bump(args, ctx.grid.dim),
        snapshot_times=parse_numbers(args.snapshot_times, "snapshot-times"),
        graph=args.graph,
    )
    return emit(outcome.result)


def handle_rescaled(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    kind = FlowKind.RESCALED_EXPANDER if args.kind == "expander" else FlowKind.NORMALIZED_SHRINKER
    outcome = run_rescaled(ctx, kind, bump=_parse_bump(args, ctx.grid.dim))
    return emit(outcome.result)


def _add_bump_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--bump-amplitude", type=float, help="add a compactly supported Gaussian bump")
    parser.add_argument("--bump-width", type=float, default=1.0)
    parser.add_argument("--bump-center", help="comma-separated center (default: origin)")


def register(subparsers):
    flow = subparsers.add_parser("flow", help="physical flow du/dt = G(D^2u) from a cone")
    add_common_arguments(flow)
    _add_bump_arguments(flow)
    flow.add_argument("--snapshot-times", help="comma-separated times to land on exactly")
    flow.add_argument("--graph", action="store_true", help="export the final Lagrangian graph (x, Du)")
    flow.set_defaults(handler=handle_flow)

    rescaled = subparsers.add_parser("rescaled-flow", help="rescaled expander or normalized shrinker flow")
    add_common_arguments(rescaled)
    _add_bump_arguments(rescaled)
    rescaled.add_argument("--kind", choices=["expander", "shrinker"], default="expander")
    rescaled.set_defaults(handler=handle_rescaled)
