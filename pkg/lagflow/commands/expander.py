"""
make-expander command: relax a cone to a self-expanding soliton and certify it
"""

import argparse
from dataclasses import dataclass

import structlog

from lagflow.commands.common import (
    CommandResult,
    RunContext,
    add_common_arguments,
    build_context,
    condition_a_slack,
    emit,
)
from lagflow.core.cone import sample_cone
from lagflow.core.exceptions import EXIT_OK, EXIT_TOLERANCE
from lagflow.services.solitons import ConeRecovery, ExpanderRun, build_expander, recover_cone
from lagflow.utils.io import write_certificate

logger = structlog.get_logger()

ROUND_TRIP_H2_FACTOR = 5.0


@dataclass
class RoundTrip:
    recovery: ConeRecovery
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def round_trip(ctx: RunContext, run: ExpanderRun) -> RoundTrip:
    """Compare the cone recovered from the expander with the input cone on the unit window"""

    recovery = recover_cone(run.field, ctx.config.interior_margin_cells)
    window = recovery.field.grid
    expected = sample_cone(ctx.cone, window)
    error = recovery.field.sup_distance(expected)

    # |v - cone| stays below the largest sector angle; on the unit window |x|^2 <= n
    angle_constant = max(abs(g) for g in ctx.cone.sector_angles())
    h = ctx.grid.spacing
    tolerance = angle_constant * window.dim / recovery.radius**2 + ROUND_TRIP_H2_FACTOR * h * h
    return RoundTrip(recovery, error, tolerance)


def run_make_expander(ctx: RunContext, check_round_trip: bool = True):
    run = build_expander(ctx.cone, ctx.grid, ctx.config, ctx.run_id)
    certificate = run.certificate

    metrics = {
        "passed": certificate.passed,
        "residual_sup_interior": certificate.residual_sup_interior,
        "tolerance": certificate.tolerance,
        "d3_sup": certificate.d3_sup,
        "condition_a_margin": certificate.condition_a_margin,
        "steps": certificate.provenance.get("steps"),
        "final_time": certificate.provenance.get("final_time"),
        "origin_value": float(run.field.values[ctx.grid.origin]),
        "condition_a_slack": condition_a_slack(run.report, ctx.config),
    }
    if check_round_trip:
        trip = round_trip(ctx, run)
        metrics.update(
            round_trip_error=trip.error,
            round_trip_tolerance=trip.tolerance,
            round_trip_passed=trip.passed,
            recovery_radius=trip.recovery.radius,
        )

    outputs = {
        "field": str(ctx.write_snapshot(run.field, "expander")),
        "certificate": str(write_certificate(certificate, ctx.path("certificate.json"))),
        "report": str(ctx.write_report(run.report)),
        "manifest": str(ctx.manifest(kind="rescaled_expander", passed=certificate.passed)),
    }
    exit_code = EXIT_OK if certificate.passed else EXIT_TOLERANCE
    if not certificate.passed:
        logger.warning(
            "Expander residual above tolerance",
            residual=certificate.residual_sup_interior,
            tolerance=certificate.tolerance,
        )
    result = CommandResult(
        command=ctx.command, run_id=ctx.run_id, exit_code=exit_code, outputs=outputs, metrics=metrics
    )
    return result, run


def handle(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    result, _ = run_make_expander(ctx, check_round_trip=not args.skip_round_trip)
    return emit(result)


def register(subparsers):
    parser = subparsers.add_parser("make-expander", help="build a self-expanding soliton asymptotic to a cone")
    add_common_arguments(parser)
    parser.add_argument("--skip-round-trip", action="store_true", help="do not recover the cone from the result")
    parser.set_defaults(handler=handle)
