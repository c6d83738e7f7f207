"""
Built-in experiment presets, each tied to an acceptance criterion
"""

import argparse
import operator
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional

import structlog
from pydantic import BaseModel, ConfigDict, Field

from lagflow.commands import expander, flow, shrinker, study, translator
from lagflow.commands.common import CommandResult, RunContext, emit, make_grid
from lagflow.core.cone import ConeSpec
from lagflow.core.config import resolve_config, settings
from lagflow.core.exceptions import EXIT_OK, EXIT_TOLERANCE, UsageError
from lagflow.services.closure import BoundaryClosure
from lagflow.services.diagnostics import decay_monitor
from lagflow.services.flow_engine import self_similarity_defect
from lagflow.services.kernels import SymMatrix
from lagflow.services.solitons import build_expander

logger = structlog.get_logger()

CONDITION_A_SLACK = -1e-6
SCALED_SNAPSHOTS = (1.0, 2.0, 4.0, 8.0, 16.0)
SCALED_BUMP = flow.Bump(center=(0.0, 0.0), amplitude=0.1, width=1.0)
SHRINKER_BUMP = flow.Bump(center=(0.0, 0.0), amplitude=0.01, width=1.0)

_CHECKS = {
    "le": operator.le,
    "lt": operator.lt,
    "ge": operator.ge,
    "gt": operator.gt,
    "eq": operator.eq,
}


class Expectation(BaseModel):
    """metric <check> value; a missing metric counts as unmet"""

    metric: str
    check: Literal["le", "lt", "ge", "gt", "eq"]
    value: Any

    def holds(self, metrics: Dict[str, Any]) -> bool:
        if self.metric not in metrics:
            return False
        try:
            return bool(_CHECKS[self.check](metrics[self.metric], self.value))
        except TypeError:
            return False

    def describe(self) -> str:
        return f"{self.metric} {self.check} {self.value}"


class ExperimentPreset(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    criterion: str
    description: str
    cone: ConeSpec
    values: Dict[str, Any] = Field(default_factory=dict)
    runner: Callable[[RunContext], CommandResult]
    expectations: List[Expectation] = Field(default_factory=list)

    def context(self, overrides: Optional[Dict[str, Any]] = None) -> RunContext:
        grid_params, config, extras = resolve_config(dict(self.values), overrides)
        grid = make_grid(grid_params)
        if grid.dim != self.cone.dim:
            raise UsageError(f"preset {self.name} is defined for dimension {self.cone.dim}")
        return RunContext(
            command=f"preset {self.name}",
            grid=grid,
            config=config,
            cone=self.cone,
            out_dir=Path(extras.get("out") or settings.OUTPUT_DIR),
            run_id=str(extras.get("run_id") or self.name),
            extras=extras,
        )

    def run(self, overrides: Optional[Dict[str, Any]] = None) -> CommandResult:
        result = self.runner(self.context(overrides))
        unmet = [e.describe() for e in self.expectations if not e.holds(result.metrics)]
        result.metrics["criterion"] = self.criterion
        result.metrics["unmet"] = unmet
        if unmet:
            logger.warning("Preset expectations unmet", preset=self.name, unmet=unmet)
            result.exit_code = max(result.exit_code, EXIT_TOLERANCE)
        return result


def _two_sector_cone() -> ConeSpec:
    return ConeSpec.two_sector(0.5, 0.3)


def _quadratic_cone() -> ConeSpec:
    return ConeSpec.quadratic(SymMatrix.diag([0.5, 0.3]))


def _run_flow(ctx: RunContext) -> CommandResult:
    return flow.run_physical(ctx).result


def _run_expander(ctx: RunContext) -> CommandResult:
    result, _ = expander.run_make_expander(ctx)
    return result


def _run_scaled(ctx: RunContext) -> CommandResult:
    """Physical flow from cone + bump against the self-similar closure of the computed expander"""

    profile = build_expander(ctx.cone, ctx.grid, ctx.config, f"{ctx.run_id}.profile")
    closure = BoundaryClosure.self_similar(profile.field, ctx.cone)

    outcome = flow.run_physical(ctx, bump=SCALED_BUMP, snapshot_times=SCALED_SNAPSHOTS, closure=closure)
    report = outcome.report
    defects = [self_similarity_defect(report, t, 2.0 * t) for t in SCALED_SNAPSHOTS[:-1]]
    constant, trend = decay_monitor(report, 3, times=SCALED_SNAPSHOTS)

    metrics = dict(outcome.result.metrics)
    metrics.update(
        profile_residual=profile.certificate.residual_sup_interior,
        self_similarity_defects=defects,
        defects_decreasing=all(b < a for a, b in zip(defects, defects[1:])),
        final_defect=defects[-1],
        final_defect_scale=defects[-1] / (10.0 * ctx.config.residual_tol),
        d3_decay_constant=constant,
        d3_decay_trend=trend,
    )
    outcome.result.metrics = metrics
    return outcome.result


def _run_shrinker(ctx: RunContext) -> CommandResult:
    return shrinker.run_triviality(ctx, SHRINKER_BUMP.amplitude, SHRINKER_BUMP.width)


def _run_translator(ctx: RunContext) -> CommandResult:
    return translator.run_check(ctx)


def _run_study(ctx: RunContext) -> CommandResult:
    return study.run_study(ctx)


def _condition_a() -> Expectation:
    return Expectation(metric="condition_a_slack", check="ge", value=CONDITION_A_SLACK)


PRESETS: Dict[str, ExperimentPreset] = {
    preset.name: preset
    for preset in [
        ExperimentPreset(
            name="quadratic-flow",
            criterion="exact quadratic flow",
            description="u0 = 1/2 x^T diag(0.5, 0.3) x moves by t * G(A) exactly",
            cone=_quadratic_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0, "t_end": 1.0},
            runner=_run_flow,
            expectations=[Expectation(metric="exact_error_sup", check="le", value=1e-8), _condition_a()],
        ),
        ExperimentPreset(
            name="two-sector-flow",
            criterion="physical flow from the two-sector cone",
            description="physical flow from the cone diag(+-0.5, 0.3) split at x1 = 0",
            cone=_two_sector_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0, "t_end": 1.0},
            runner=_run_flow,
            expectations=[Expectation(metric="report_rows", check="gt", value=0), _condition_a()],
        ),
        ExperimentPreset(
            name="two-sector-expander",
            criterion="expander construction and cone round trip",
            description="rescaled expander flow to a smooth non-quadratic self-expander",
            cone=_two_sector_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0, "delta": 0.5, "s_end": 20.0},
            runner=_run_expander,
            expectations=[
                Expectation(metric="passed", check="eq", value=True),
                Expectation(metric="d3_sup", check="gt", value=0.01),
                Expectation(metric="round_trip_passed", check="eq", value=True),
                _condition_a(),
            ],
        ),
        ExperimentPreset(
            name="scaled-convergence",
            criterion="scaled flow converges to the expander; derivative decay",
            description="cone + bump(0, 0.1, 1), self-similarity defect at t, 2t for t = 1, 2, 4, 8",
            cone=_two_sector_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0, "delta": 0.25, "t_end": 16.0},
            runner=_run_scaled,
            expectations=[
                Expectation(metric="defects_decreasing", check="eq", value=True),
                Expectation(metric="final_defect_scale", check="le", value=1.0),
                Expectation(metric="d3_decay_trend", check="eq", value=True),
                _condition_a(),
            ],
        ),
        ExperimentPreset(
            name="shrinker-triviality",
            criterion="shrinker triviality",
            description="quadratic shrinker + bump(0, 0.01, 1) under the normalized shrinker flow to s = 5",
            cone=_quadratic_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0, "delta": 0.25, "s_end": 5.0},
            runner=_run_shrinker,
            expectations=[
                Expectation(metric="decay_ratio", check="le", value=0.1),
                Expectation(metric="fit_monotone", check="eq", value=True),
                _condition_a(),
            ],
        ),
        ExperimentPreset(
            name="translator",
            criterion="translator identity",
            description="a = e1, b = A a, c = G(A) on quadratic data, compared at t = 1",
            cone=_quadratic_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0, "t_end": 1.0, "residual_tol": 1e-8},
            runner=_run_translator,
            expectations=[
                Expectation(metric="static_residual", check="le", value=1e-12),
                Expectation(metric="dynamic_defect", check="le", value=1e-8),
                _condition_a(),
            ],
        ),
        ExperimentPreset(
            name="convergence-study",
            criterion="spatial order and truncation control",
            description="h-halving of a smooth flow at R = 4; expander residual at R = 4, 8, 16",
            cone=_two_sector_cone(),
            values={"dim": 2, "grid_m": 129, "grid_R": 8.0},
            runner=_run_study,
            expectations=[
                Expectation(metric="observed_order", check="ge", value=study.MIN_ORDER),
                Expectation(metric="domain_stable", check="eq", value=True),
            ],
        ),
    ]
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UsageError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def handle(args: argparse.Namespace) -> int:
    if args.list:
        listing = {p.name: f"{p.criterion}: {p.description}" for p in PRESETS.values()}
        return emit(CommandResult(command="preset", run_id="list", exit_code=EXIT_OK, metrics=listing))
    if args.name is None:
        raise UsageError("preset needs a name (or --list)")

    overrides = {
        key: getattr(args, key)
        for key in ("grid_m", "grid_R", "workers", "run_id", "out")
        if getattr(args, key) is not None
    }
    return emit(get_preset(args.name).run(overrides))


def register(subparsers):
    parser = subparsers.add_parser("preset", help="run a built-in acceptance experiment")
    parser.add_argument("name", nargs="?", help="preset name")
    parser.add_argument("--list", action="store_true", help="list presets and exit")
    parser.add_argument("--grid-m", dest="grid_m", type=int)
    parser.add_argument("--grid-R", dest="grid_R", type=float)
    parser.add_argument("--out", type=Path)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--run-id", dest="run_id")
    parser.set_defaults(handler=handle)
