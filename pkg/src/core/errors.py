"""Custom exceptions and error handling."""

import json
import sys
from typing import Any, Dict, Optional, Sequence
from pydantic import BaseModel, ValidationError


EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class ErrorResponse(BaseModel):
    """Standard error envelope."""

    code: str
    message: str
    exit_code: int
    details: Optional[Dict[str, Any]] = None


class TabAttentionError(Exception):
    """Base library error."""

    def __init__(
        self,
        code: str,
        message: str,
        exit_code: int = EXIT_VALIDATION,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.code = code
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(message)


class ShapeMismatchError(TabAttentionError):
    """Operand shapes are incompatible."""

    def __init__(self, op: str, *shapes: Sequence[int], reason: str = ""):
        rendered = ", ".join(str(tuple(s)) for s in shapes)
        message = f"Shapes {rendered} are incompatible for '{op}'."
        if reason:
            message = f"{message} {reason}"
        super().__init__(
            code="SHAPE_MISMATCH",
            message=message,
            details={"op": op, "shapes": [list(s) for s in shapes]},
        )


class InvalidAxisError(TabAttentionError):
    """Axis out of range or malformed axis set."""

    def __init__(self, op: str, axes: Any, rank: int):
        super().__init__(
            code="INVALID_AXIS",
            message=f"Axes {axes!r} are invalid for '{op}' on a rank-{rank} tensor.",
            details={"op": op, "axes": repr(axes), "rank": rank},
        )


class NonScalarLossError(TabAttentionError):
    """Backward was started from a non-scalar node."""

    def __init__(self, shape: Sequence[int]):
        super().__init__(
            code="NON_SCALAR_LOSS",
            message=f"Backward requires a scalar-shaped loss, got shape {tuple(shape)}.",
            details={"shape": list(shape)},
        )


class InvalidGeometryError(TabAttentionError):
    """Convolution geometry does not produce an integral output."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(code="INVALID_GEOMETRY", message=message, details=details)


class DegenerateBatchError(TabAttentionError):
    """Batch statistics need at least two values per channel."""

    def __init__(self, count: int):
        super().__init__(
            code="DEGENERATE_BATCH",
            message=f"Train-mode batch normalization needs >= 2 values per channel, got {count}.",
            details={"count": count},
        )


class SingularSystemError(TabAttentionError):
    """Normal equations are numerically singular."""

    def __init__(self, condition: float):
        super().__init__(
            code="SINGULAR_SYSTEM",
            message=f"Regularized Gram matrix is numerically singular (condition {condition:.3e}).",
            exit_code=EXIT_NUMERICAL,
            details={"condition": condition},
        )


class InvalidSpecError(TabAttentionError):
    """Synthetic task specification is invalid."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(code="INVALID_SPEC", message=message, details=details)


class TooShortError(TabAttentionError):
    """Video has fewer frames than one segment."""

    def __init__(self, frames: int, seg_len: int):
        super().__init__(
            code="TOO_SHORT",
            message=f"Video has {frames} frames; at least {seg_len} are required.",
            details={"frames": frames, "seg_len": seg_len},
        )


class TooFewSamplesError(TabAttentionError):
    """Not enough samples to build the requested folds or fit a statistic."""

    def __init__(self, n: int, k: int, message: Optional[str] = None):
        super().__init__(
            code="TOO_FEW_SAMPLES",
            message=message or f"{n} samples cannot be split into {k} folds.",
            details={"n": n, "k": k},
        )


class NonPositiveTargetError(TabAttentionError):
    """MAPE is undefined for non-positive targets."""

    def __init__(self, value: float):
        super().__init__(
            code="NON_POSITIVE_TARGET",
            message=f"Targets must be strictly positive, found {value}.",
            details={"value": value},
        )


class InvalidEpochError(TabAttentionError):
    """Epoch index outside the schedule."""

    def __init__(self, epoch: int, total_epochs: int):
        super().__init__(
            code="INVALID_EPOCH",
            message=f"Epoch {epoch} is outside [0, {total_epochs}).",
            details={"epoch": epoch, "total_epochs": total_epochs},
        )


class GradcheckFailureError(TabAttentionError):
    """Analytic gradients disagree with finite differences."""

    def __init__(self, failures: Dict[str, float], tolerance: float):
        super().__init__(
            code="GRADCHECK_FAILED",
            message=f"{len(failures)} gradient check(s) exceeded tolerance {tolerance:g}.",
            exit_code=EXIT_NUMERICAL,
            details={"failures": failures, "tolerance": tolerance},
        )


class NumericalError(TabAttentionError):
    """Non-finite value produced by a forward op."""

    def __init__(self, op: str):
        super().__init__(
            code="NON_FINITE",
            message=f"Op '{op}' produced NaN or Inf on finite inputs.",
            exit_code=EXIT_NUMERICAL,
            details={"op": op},
        )


class DatasetNotFoundError(TabAttentionError):
    """Dataset directory or manifest is missing."""

    def __init__(self, path: str):
        super().__init__(
            code="DATASET_NOT_FOUND",
            message=f"Dataset '{path}' does not exist or has no manifest.",
            details={"path": path},
        )


class CorruptFileError(TabAttentionError):
    """Binary file failed to parse."""

    def __init__(self, path: str, reason: str):
        super().__init__(
            code="CORRUPT_FILE",
            message=f"File '{path}' is corrupt: {reason}",
            details={"path": path, "reason": reason},
        )


class IoFailureError(TabAttentionError):
    """Filesystem operation failed."""

    def __init__(self, path: str, reason: str):
        super().__init__(
            code="IO_ERROR",
            message=f"I/O failure at '{path}': {reason}",
            details={"path": path, "reason": reason},
        )


class ValidationFailedError(TabAttentionError):
    """Configuration failed validation."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(code="VALIDATION_ERROR", message=message, details=details)


def error_envelope(exc: BaseException) -> ErrorResponse:
    """Convert any exception to the standard envelope."""
    if isinstance(exc, TabAttentionError):
        return ErrorResponse(
            code=exc.code,
            message=exc.message,
            exit_code=exc.exit_code,
            details=exc.details,
        )
    if isinstance(exc, ValidationError):
        return ErrorResponse(
            code="VALIDATION_ERROR",
            message="Configuration validation failed.",
            exit_code=EXIT_VALIDATION,
            details={"errors": json.loads(exc.json())},
        )
    return ErrorResponse(
        code="INTERNAL_ERROR",
        message="An unexpected error occurred.",
        exit_code=EXIT_INTERNAL,
        details={"error": str(exc)},
    )


def handle_error(exc: BaseException) -> int:
    """Write the error envelope to stderr and return the process exit code."""
    envelope = error_envelope(exc)
    sys.stderr.write(json.dumps({"error": envelope.model_dump()}, default=str) + "\n")
    return envelope.exit_code
