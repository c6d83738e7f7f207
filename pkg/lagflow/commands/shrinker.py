"""
probe-shrinker command: perturb a quadratic shrinker and watch the third derivatives decay
"""

import argparse

import structlog

from lagflow.commands.common import (
    CommandResult,
    RunContext,
    add_common_arguments,
    build_context,
    condition_a_slack,
    emit,
    parse_vector,
)
from lagflow.core.cone import add_compact_bump
from lagflow.core.exceptions import EXIT_OK, EXIT_TOLERANCE, UsageError
from lagflow.services.solitons import probe_shrinker, quadratic_soliton
from lagflow.utils.io import write_certificate

logger = structlog.get_logger()


def run_triviality(ctx: RunContext, amplitude: float = 0.01, width: float = 1.0, center=None):
    if not ctx.cone.is_quadratic():
        raise UsageError("probe-shrinker needs a quadratic cone (one Hessian for every sector)")

    reference = quadratic_soliton(ctx.cone.sectors[0].hessian, "shrinker")
    w0 = add_compact_bump(reference.sample(ctx.grid), center or [0.0] * ctx.grid.dim, amplitude, width)
    certificate, report = probe_shrinker(w0, reference, ctx.grid, ctx.config, run_id=ctx.run_id)

    fits = certificate.fit_distances
    metrics = {
        "passed": certificate.passed,
        "d3_initial": certificate.d3_initial,
        "d3_final": certificate.d3_sup,
        "decay_ratio": certificate.d3_sup / certificate.d3_initial if certificate.d3_initial else 0.0,
        "fit_distance": certificate.fit_distance,
        "fit_monotone": all(b <= a for a, b in zip(fits, fits[1:])),
        "residual_sup_interior": certificate.residual_sup_interior,
        "condition_a_margin": certificate.condition_a_margin,
        "condition_a_slack": condition_a_slack(report, ctx.config),
    }
    outputs = {
        "certificate": str(write_certificate(certificate, ctx.path("certificate.json"))),
        "report": str(ctx.write_report(report)),
        "manifest": str(
            ctx.manifest(
                kind="normalized_shrinker",
                bump={"center": center, "amplitude": amplitude, "width": width},
                passed=certificate.passed,
            )
        ),
    }
    exit_code = EXIT_OK if certificate.passed else EXIT_TOLERANCE
    return CommandResult(command=ctx.command, run_id=ctx.run_id, exit_code=exit_code, outputs=outputs, metrics=metrics)


def handle(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    center = parse_vector(args.bump_center, ctx.grid.dim, "bump-center")
    return emit(run_triviality(ctx, args.bump_amplitude, args.bump_width, center))


def register(subparsers):
    parser = subparsers.add_parser("probe-shrinker", help="shrinker triviality check on a perturbed quadratic shrinker")
    add_common_arguments(parser)
    parser.add_argument("--bump-amplitude", type=float, default=0.01)
    parser.add_argument("--bump-width", type=float, default=1.0)
    parser.add_argument("--bump-center", help="comma-separated center (default: origin)")
    parser.set_defaults(handler=handle)
