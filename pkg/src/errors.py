"""Exception hierarchy for HypDiff."""

from __future__ import annotations

from typing import Any, Dict, Optional


class HypDiffError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HypDiffError, ValueError):
    """Invalid or unreadable configuration."""


class ManifoldError(HypDiffError, ValueError):
    """Point off its manifold, mismatched configs, or invalid coordinates."""


class GraphFormatError(HypDiffError, ValueError):
    """Malformed graph input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MetricError(HypDiffError, ValueError):
    """Inputs a metric cannot be computed on."""


class CheckpointError(HypDiffError, ValueError):
    """Checkpoint missing, corrupt, or from another format version."""


class TrainingDivergedError(HypDiffError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(
        self,
        message: str,
        diagnostics: Optional[Dict[str, Any]] = None,
        last_state: Optional[Dict[str, Any]] = None,
    ):
        self.diagnostics = diagnostics or {}
        self.last_state = last_state
        super().__init__(message)
