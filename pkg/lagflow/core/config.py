"""
Configuration settings for lagflow
"""

from pathlib import Path
from typing import Any, Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from lagflow.core.exceptions import UsageError


class Settings(BaseSettings):
    """Process-level settings"""

    model_config = SettingsConfigDict(
        env_prefix="LAGFLOW_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "lagflow"
    VERSION: str = "1.0.0"

    # Parallelism
    WORKERS: int = 1

    # Output
    OUTPUT_DIR: str = "runs"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "json"

    @field_validator("WORKERS")
    @classmethod
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError("LAGFLOW_WORKERS must be >= 1")
        return v

    @field_validator("LOG_FORMAT")
    @classmethod
    def validate_log_format(cls, v):
        if v not in ("json", "console"):
            raise ValueError("LAGFLOW_LOG_FORMAT must be 'json' or 'console'")
        return v


# Create settings instance
settings = Settings()


class RunConfig(BaseModel):
    """Numerical parameters of a single run"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Condition A margin
    delta: float = Field(0.5, gt=0.0, lt=1.0)

    # Time stepping
    dt_safety: float = Field(0.9, gt=0.0, le=1.0)
    t_end: float = Field(1.0, gt=0.0)
    s_end: float = Field(20.0, gt=0.0)
    integrator: Literal["rk2", "linearized_implicit"] = "rk2"
    implicit_dt_multiplier: float = Field(10.0, ge=1.0)
    implicit_rtol: float = Field(1e-10, gt=0.0)
    drift_scheme: Literal["centered", "upwind"] = "centered"

    # Reporting
    snapshot_stride: int = Field(10, ge=1)
    interior_margin_cells: int = Field(4, ge=2)
    keep_row_snapshots: bool = False
    monitor_d4: bool = False

    # Stopping and acceptance
    stationarity_tol: float = Field(1e-8, gt=0.0)
    stationarity_checks: int = Field(10, ge=1)
    residual_tol: float = Field(1e-4, gt=0.0)
    blowup_threshold: float = Field(1e8, gt=0.0)

    # Parallelism
    workers: int = Field(default_factory=lambda: settings.WORKERS, ge=1)


class GridParams(BaseModel):
    """Grid keys accepted in config files"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = 2
    grid_m: int = 129
    grid_R: float = 8.0


GRID_KEYS = set(GridParams.model_fields)
RUN_KEYS = set(RunConfig.model_fields)
FILE_KEYS = {"cone", "run_id", "out"}


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse flat 'key = value' lines; '#' starts a comment"""

    entries: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        if key not in GRID_KEYS | RUN_KEYS | FILE_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        entries[key] = value
    return entries


def load_config_file(path: Path) -> Dict[str, str]:
    """Read a config file from disk"""
    try:
        return parse_config_text(Path(path).read_text())
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e}") from e


def resolve_config(
    file_values: Optional[Dict[str, str]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> tuple[GridParams, RunConfig, Dict[str, Any]]:
    """Merge file values and flag overrides (flags win) into validated models"""

    merged: Dict[str, Any] = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        grid = GridParams(**{k: v for k, v in merged.items() if k in GRID_KEYS})
        run = RunConfig(**{k: v for k, v in merged.items() if k in RUN_KEYS})
    except ValidationError as e:
        raise UsageError(f"invalid configuration: {e}") from e

    extras = {k: v for k, v in merged.items() if k in FILE_KEYS}
    return grid, run, extras
