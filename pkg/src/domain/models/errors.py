"""
Error hierarchy shared by every layer.
Each error carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, List, Optional


class DvdError(Exception):
    """Base class for all domain errors."""
    exit_code: int = 1


class InvalidArgumentError(DvdError, ValueError):
    """Bad caller input: sizes, ranges, flags."""
    exit_code = 2


class FormatError(DvdError):
    """Malformed file or directory; names the offending path."""
    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message} ({path})" if path else message)
        self.path = path


class ConvergenceError(DvdError):
    """Fixed-point inversion did not reach the tolerance."""
    exit_code = 3

    def __init__(self, message: str, max_residual: float):
        super().__init__(f"{message}: max residual {max_residual:.3e}")
        self.max_residual = max_residual


class GenerationError(DvdError):
    """Synthetic warp could not be made bijective."""
    exit_code = 3


class ScheduleError(DvdError):
    """Noise schedule produced an invalid reverse-step coefficient."""
    exit_code = 4


class CheckpointError(DvdError):
    exit_code = 3

    def __init__(self, message: str, found_version: Any = None, expected_version: Any = None):
        super().__init__(
            f"{message} (found version={found_version}, expected version={expected_version})"
        )
        self.found_version = found_version
        self.expected_version = expected_version


class AggregationError(DvdError):
    exit_code = 3

    def __init__(self, message: str, ids: List[str]):
        super().__init__(f"{message}: {', '.join(ids)}")
        self.ids = ids


class IdMismatchError(DvdError):
    """Prediction and ground-truth sets disagree on ids."""
    exit_code = 3

    def __init__(self, missing_pred: List[str], missing_gt: List[str]):
        parts = []
        if missing_pred:
            parts.append(f"no prediction for: {', '.join(missing_pred)}")
        if missing_gt:
            parts.append(f"no ground truth for: {', '.join(missing_gt)}")
        super().__init__("; ".join(parts) or "id mismatch")
        self.missing_pred = missing_pred
        self.missing_gt = missing_gt


class TrainingError(DvdError):
    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        details = diagnostics or {}
        suffix = ", ".join(f"{k}={v}" for k, v in details.items())
        super().__init__(f"{message} [{suffix}]" if suffix else message)
        self.diagnostics = details


class OcrServiceError(DvdError):
    """The external OCR service failed after retries."""
    exit_code = 5


class MetricUnavailableError(DvdError):
    """A metric could not be computed for one sample."""
    exit_code = 3
