"""
Structured logging configuration for lagflow
"""

import sys
import logging
from typing import Any, Dict, Optional

import structlog
from structlog.stdlib import LoggerFactory

from lagflow.core.config import settings


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None):
    """Setup structured logging configuration"""

    level = (level or settings.LOG_LEVEL).upper()
    fmt = fmt or settings.LOG_FORMAT
    renderer = (
        structlog.dev.ConsoleRenderer(colors=False)
        if fmt == "console"
        else structlog.processors.JSONRenderer()
    )

    # Configure structlog
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    # stdout carries command results, so logs go to stderr
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level, logging.INFO),
        force=True,
    )


class FlowLogger:
    """Run-level logging for flows, certificates and experiments"""

    def __init__(self, name: str = "lagflow"):
        self.logger = structlog.get_logger(name)

    def log_run_start(self, run_id: str, kind: str, **kwargs):
        """Log the start of a flow run"""
        self.logger.info("Run started", run_id=run_id, kind=kind, **kwargs)

    def log_step(self, run_id: str, step: int, time: float, change_rate: float, **kwargs):
        """Log a periodic step summary"""
        self.logger.debug(
            "Step",
            run_id=run_id,
            step=step,
            time=time,
            change_rate=change_rate,
            **kwargs
        )

    def log_run_end(self, run_id: str, steps: int, time: float, reason: str, **kwargs):
        """Log the end of a flow run"""
        self.logger.info(
            "Run finished",
            run_id=run_id,
            steps=steps,
            time=time,
            reason=reason,
            **kwargs
        )

    def log_error(self, run_id: str, error: str, context: Dict[str, Any] = None):
        """Log error with context"""
        log_data = {
            "run_id": run_id,
            "error": error,
        }
        if context:
            log_data.update(context)

        self.logger.error("Run error", **log_data)

    def log_certificate(self, kind: str, residual_sup: float, passed: bool, **kwargs):
        """Log certificate emission"""
        self.logger.info(
            "Certificate",
            kind=kind,
            residual_sup=residual_sup,
            passed=passed,
            **kwargs
        )

    def log_performance(self, operation: str, duration: float, **kwargs):
        """Log performance metrics"""
        self.logger.info(
            "Performance metric",
            operation=operation,
            duration_ms=duration * 1000,
            **kwargs
        )


# Create global logger instance
flow_logger = FlowLogger()
