"""
blowdown command: lambda^-2 u(lambda x) for a stored field, compared with its cone
"""

import argparse
from pathlib import Path

import pandas as pd

from lagflow.commands.common import CommandResult, add_common_arguments, build_context, emit, parse_numbers
from lagflow.core.cone import sample_cone
from lagflow.core.exceptions import EXIT_OK, UsageError
from lagflow.services.solitons import blowdown, check_condition_b
from lagflow.utils.io import read_field, write_frame

DEFAULT_SCALES = (1.0, 2.0, 4.0)


def handle(args: argparse.Namespace) -> int:
    ctx = build_context(args, require_cone=False)
    if args.field is None and ctx.cone is None:
        raise UsageError("blowdown needs --field <file> or a cone to sample")

    u = read_field(args.field) if args.field is not None else sample_cone(ctx.cone, ctx.grid)
    scales = parse_numbers(args.lambdas, "lambdas") or list(DEFAULT_SCALES)
    result = blowdown(u, scales)

    if ctx.cone is not None:
        reference = sample_cone(ctx.cone, result.window)
    else:
        reference = result.fields[-1]
    frame = pd.DataFrame({"lambda": result.lambdas, "gap": result.gaps(reference)})

    metrics = {
        "window_radius": result.window.radius,
        "interpolated": result.interpolated,
        "gaps": frame["gap"].tolist(),
    }
    if u.grid.points_per_axis >= 9:
        metrics["condition_b_deviation"] = check_condition_b(u)

    outputs = {
        "blowdown": str(write_frame(frame, ctx.path("blowdown.csv"))),
        "manifest": str(
            ctx.manifest(field=None if args.field is None else str(args.field), lambdas=result.lambdas)
        ),
    }
    return emit(CommandResult(command=ctx.command, run_id=ctx.run_id, exit_code=EXIT_OK, outputs=outputs, metrics=metrics))


def register(subparsers):
    parser = subparsers.add_parser("blowdown", help="blow-down sequence of a field towards its cone")
    add_common_arguments(parser)
    parser.add_argument("--field", type=Path, help="field file (lagflow-field v1); default: the sampled cone")
    parser.add_argument("--lambdas", help="comma-separated scales (default 1,2,4)")
    parser.set_defaults(handler=handle)
