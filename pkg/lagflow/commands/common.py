"""
Shared command plumbing: common flags, config resolution, outputs and the manifest
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
from pydantic import BaseModel

from lagflow.core.cone import ConeSpec
from lagflow.core.config import GridParams, RunConfig, load_config_file, resolve_config, settings
from lagflow.core.exceptions import UsageError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.diagnostics import FlowReport
from lagflow.utils.io import encode_numbers, read_cone, write_field, write_frame, write_manifest

logger = structlog.get_logger()


@dataclass
class RunContext:
    """Everything a command needs once flags and config file are merged"""

    command: str
    grid: Grid
    config: RunConfig
    cone: Optional[ConeSpec]
    out_dir: Path
    run_id: str
    extras: Dict[str, Any] = field(default_factory=dict)

    def path(self, suffix: str) -> Path:
        return self.out_dir / f"{self.run_id}.{suffix}"

    def manifest(self, **payload) -> Path:
        data = {
            "command": self.command,
            "run_id": self.run_id,
            "version": settings.VERSION,
            "grid": self.grid.to_dict(),
            "config": self.config.model_dump(),
            "cone": _cone_payload(self.cone),
        }
        data.update(payload)
        return write_manifest(self.out_dir, self.run_id, data)

    def write_report(self, report: FlowReport) -> Path:
        return write_frame(report.to_frame(), self.path("report.csv"))

    def write_snapshot(self, snapshot: ScalarField, label: str) -> Path:
        return write_field(snapshot, self.path(f"{label}.field"))

    def write_snapshots(self, report: FlowReport) -> Dict[str, str]:
        """One field file per exact-time snapshot, keyed 'snapshot_<k>'"""
        written = {}
        for k, t in enumerate(sorted(report.snapshots)):
            written[f"snapshot_{k}"] = str(self.write_snapshot(report.snapshots[t], f"snapshot{k}"))
        return written


class CommandResult(BaseModel):
    """Summary printed on stdout when a command finishes"""

    command: str
    run_id: str
    exit_code: int
    outputs: Dict[str, str] = {}
    metrics: Dict[str, Any] = {}


def _cone_payload(cone: Optional[ConeSpec]):
    if cone is None:
        return None
    return [
        {"sign_pattern": list(s.sign_pattern), "entries": list(s.hessian.entries)}
        for s in cone.sectors
    ]


def add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="'key = value' config file; flags override it")
    parser.add_argument("--cone", type=Path, help="cone spec file (lagflow-cone v1)")
    parser.add_argument("--dim", type=int, help="grid dimension n")
    parser.add_argument("--grid-m", dest="grid_m", type=int, help="points per axis (odd, >= 5)")
    parser.add_argument("--grid-R", dest="grid_R", type=float, help="half-width R of the domain [-R, R]^n")
    parser.add_argument("--delta", type=float, help="Condition A margin")
    parser.add_argument("--t-end", dest="t_end", type=float, help="physical end time")
    parser.add_argument("--s-end", dest="s_end", type=float, help="rescaled end time")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--workers", type=int, help="worker threads (default LAGFLOW_WORKERS)")
    parser.add_argument("--run-id", dest="run_id", help="prefix of every output file")


def build_context(args: argparse.Namespace, require_cone: bool = True) -> RunContext:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {
        key: getattr(args, key, None)
        for key in ("dim", "grid_m", "grid_R", "delta", "t_end", "s_end", "workers", "run_id", "out")
    }
    if getattr(args, "cone", None) is not None:
        overrides["cone"] = str(args.cone)

    grid_params, config, extras = resolve_config(file_values, overrides)
    grid = make_grid(grid_params)

    cone = read_cone(Path(extras["cone"])) if extras.get("cone") else None
    if cone is None and require_cone:
        raise UsageError(f"command '{args.command}' needs a cone (--cone <file> or 'cone = <file>' in the config)")
    if cone is not None and cone.dim != grid.dim:
        raise UsageError(f"cone dimension {cone.dim} does not match grid dimension {grid.dim}")

    return RunContext(
        command=args.command,
        grid=grid,
        config=config,
        cone=cone,
        out_dir=Path(extras.get("out") or settings.OUTPUT_DIR),
        run_id=str(extras.get("run_id") or args.command),
        extras=extras,
    )


def make_grid(params: GridParams) -> Grid:
    try:
        return Grid(dim=params.dim, radius=params.grid_R, points_per_axis=params.grid_m)
    except ValueError as e:
        raise UsageError(str(e)) from e


def condition_a_slack(report: FlowReport, config: RunConfig) -> float:
    """(1 - delta) minus the largest interior Hessian eigenvalue magnitude seen in any report row"""
    radius = max(max(abs(r.hess_min), abs(r.hess_max)) for r in report.rows)
    return (1.0 - config.delta) - radius


def parse_numbers(text: Optional[str], name: str) -> List[float]:
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as e:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}") from e


def parse_vector(text: Optional[str], dim: int, name: str) -> Optional[List[float]]:
    if text is None:
        return None
    values = parse_numbers(text, name)
    if len(values) != dim:
        raise UsageError(f"--{name} needs {dim} components, got {len(values)}")
    return values


def emit(result: CommandResult) -> int:
    """Print the command summary as JSON on stdout and return its exit code"""
    payload = encode_numbers(result.model_dump())
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return result.exit_code
