"""
check-translator command: static translator identity and the dynamic comparison
"""

import argparse

import numpy as np

from lagflow.commands.common import (
    CommandResult,
    RunContext,
    add_common_arguments,
    build_context,
    condition_a_slack,
    emit,
    parse_vector,
)
from lagflow.core.cone import sample_cone
from lagflow.core.exceptions import EXIT_OK, EXIT_TOLERANCE, UsageError
from lagflow.services.kernels import angle
from lagflow.services.solitons import check_translator
from lagflow.utils.io import write_certificate, write_frame


def translator_data(ctx: RunContext, a=None, b=None, c=None):
    """Defaults for quadratic data: a = e1, b = A a, c = G(A)"""
    if not ctx.cone.is_quadratic():
        raise UsageError("check-translator needs a quadratic cone")
    hessian = ctx.cone.sectors[0].hessian
    n = ctx.grid.dim
    a = np.asarray(a if a is not None else np.eye(n)[0], dtype=float)
    b = np.asarray(b if b is not None else hessian.to_array() @ a, dtype=float)
    c = float(c if c is not None else angle(hessian))
    return a, b, c


def run_check(ctx: RunContext, a=None, b=None, c=None) -> CommandResult:
    a, b, c = translator_data(ctx, a, b, c)
    u0 = sample_cone(ctx.cone, ctx.grid)
    certificate, report = check_translator(u0, a, b, c, ctx.grid, ctx.config, run_id=ctx.run_id)

    residuals = report.to_frame()[["step", "time"]].copy()
    residuals["static_residual"] = certificate.static_residual
    residuals["dynamic_defect"] = np.nan
    residuals.loc[residuals.index[-1], "dynamic_defect"] = certificate.dynamic_defect

    outputs = {
        "certificate": str(write_certificate(certificate, ctx.path("certificate.json"))),
        "residuals": str(write_frame(residuals, ctx.path("residuals.csv"))),
        "report": str(ctx.write_report(report)),
        "manifest": str(ctx.manifest(kind="translator", a=a.tolist(), b=b.tolist(), c=c, passed=certificate.passed)),
    }
    metrics = {
        "passed": certificate.passed,
        "static_residual": certificate.static_residual,
        "dynamic_defect": certificate.dynamic_defect,
        "tolerance": certificate.tolerance,
        "condition_a_slack": condition_a_slack(report, ctx.config),
    }
    exit_code = EXIT_OK if certificate.passed else EXIT_TOLERANCE
    return CommandResult(command=ctx.command, run_id=ctx.run_id, exit_code=exit_code, outputs=outputs, metrics=metrics)


def handle(args: argparse.Namespace) -> int:
    ctx = build_context(args)
    n = ctx.grid.dim
    return emit(run_check(ctx, parse_vector(args.a, n, "a"), parse_vector(args.b, n, "b"), args.c))


def register(subparsers):
    parser = subparsers.add_parser("check-translator", help="verify the translator identity on quadratic data")
    add_common_arguments(parser)
    parser.add_argument("--a", help="translation velocity (default e1)")
    parser.add_argument("--b", help="gradient drift (default A a)")
    parser.add_argument("--c", type=float, help="constant (default G(A))")
    parser.set_defaults(handler=handle)
