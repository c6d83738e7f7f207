"""
File formats: field snapshots, cone specs, CSV tables, certificates and manifests
"""

import json
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
import structlog

from lagflow.core.cone import ConeSector, ConeSpec
from lagflow.core.exceptions import UsageError
from lagflow.core.grid import Grid, ScalarField
from lagflow.services.kernels import SymMatrix

logger = structlog.get_logger()

FIELD_HEADER = "lagflow-field v1"
CONE_HEADER = "lagflow-cone v1"
FLOAT_FORMAT = "%.16e"


def format_number(value: float) -> str:
    """17 significant digits, locale independent"""
    return FLOAT_FORMAT % float(value)


def _prepare(path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_text(path: Path, text: str) -> Path:
    path = _prepare(path)
    try:
        with open(path, "w", newline="\n") as handle:
            handle.write(text)
    except OSError as e:
        logger.error("File write failed", path=str(path), error=str(e))
        raise UsageError(f"cannot write {path}: {e}") from e
    return path


def _read_lines(path: Path) -> List[str]:
    try:
        return Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def write_field(field: ScalarField, path: Path) -> Path:
    grid = field.grid
    lines = [FIELD_HEADER, f"dim={grid.dim} m={grid.points_per_axis} R={format_number(grid.radius)}"]
    lines.extend(format_number(v) for v in field.flat)
    return _write_text(path, "\n".join(lines) + "\n")


def read_field(path: Path) -> ScalarField:
    lines = _read_lines(path)
    if len(lines) < 2 or lines[0].strip() != FIELD_HEADER:
        raise UsageError(f"{path} is not a {FIELD_HEADER} file")
    try:
        meta = dict(token.split("=", 1) for token in lines[1].split())
        grid = Grid(dim=int(meta["dim"]), radius=float(meta["R"]), points_per_axis=int(meta["m"]))
        values = np.asarray([float(v) for v in lines[2:] if v.strip()])
    except (KeyError, ValueError) as e:
        raise UsageError(f"malformed field file {path}: {e}") from e
    if values.size != grid.size:
        raise UsageError(f"{path} holds {values.size} values, header announces {grid.size}")
    return ScalarField(grid, values)


def _cone_dim(token_count: int) -> int:
    # a sector line holds n sign tokens and n(n+1)/2 matrix entries
    for n in range(1, 8):
        if n + n * (n + 1) // 2 == token_count:
            return n
    raise UsageError(f"sector line with {token_count} tokens matches no dimension")


def parse_cone_text(text: str) -> ConeSpec:
    lines = [line.split("#", 1)[0].strip() for line in text.splitlines()]
    lines = [line for line in lines if line]
    if not lines or lines[0] != CONE_HEADER:
        raise UsageError(f"cone file must start with {CONE_HEADER!r}")
    if len(lines) < 2:
        raise UsageError("cone file has no sectors")

    sectors = []
    dim = None
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        n = _cone_dim(len(tokens))
        if dim is not None and n != dim:
            raise UsageError(f"cone line {lineno}: dimension {n} differs from {dim}")
        dim = n
        try:
            signs = tuple(int(t) for t in tokens[:n])
            entries = tuple(float(t) for t in tokens[n:])
            sectors.append(ConeSector(sign_pattern=signs, hessian=SymMatrix(n, entries)))
        except ValueError as e:
            raise UsageError(f"cone line {lineno}: {e}") from e

    try:
        return ConeSpec(dim=dim, sectors=tuple(sectors))
    except ValueError as e:
        raise UsageError(f"invalid cone: {e}") from e


def read_cone(path: Path) -> ConeSpec:
    return parse_cone_text("\n".join(_read_lines(path)))


def write_cone(spec: ConeSpec, path: Path) -> Path:
    lines = [CONE_HEADER]
    for sector in spec.sectors:
        signs = " ".join(f"{s:+d}" if s else "0" for s in sector.sign_pattern)
        entries = " ".join(format_number(e) for e in sector.hessian.entries)
        lines.append(f"{signs} {entries}")
    return _write_text(path, "\n".join(lines) + "\n")


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    """CSV with 17-significant-digit floats and '\\n' line endings"""
    path = _prepare(path)
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="nan")
    except OSError as e:
        logger.error("CSV export failed", path=str(path), error=str(e))
        raise UsageError(f"cannot write {path}: {e}") from e
    return path


def encode_numbers(value: Any) -> Any:
    """Replace floats by their 17-digit decimal strings, recursively"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (float, np.floating)):
        return format_number(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, dict):
        return {str(k): encode_numbers(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [encode_numbers(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    text = json.dumps(encode_numbers(payload), indent=2, sort_keys=True)
    return _write_text(path, text + "\n")


def write_certificate(certificate, path: Path) -> Path:
    """Certificate JSON; `certificate` provides to_payload()"""
    return write_json(certificate.to_payload(), path)


def write_manifest(out_dir: Path, run_id: str, payload: Dict[str, Any]) -> Path:
    return write_json(payload, Path(out_dir) / f"{run_id}.manifest.json")
