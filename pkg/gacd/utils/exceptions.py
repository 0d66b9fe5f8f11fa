"""
Application Exceptions

Custom exceptions raised by the distillation library and translated into
exit statuses by the command-line runner.
"""

from typing import Any, Dict, Iterable, Optional


class GACDException(Exception):
    """Base exception for all application-specific errors."""

    def __init__(
        self,
        message: str,
        error_code: str = "UNKNOWN_ERROR",
        details: Optional[Dict[str, Any]] = None,
        exit_code: int = 1,
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        self.exit_code = exit_code


class ConfigValidationError(GACDException):
    """Raised when an experiment configuration is invalid or unresolvable."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Invalid configuration: {message}",
            error_code="CONFIG_INVALID",
            details=details,
            exit_code=2,
        )


class UnknownDatasetError(GACDException):
    """Raised for a dataset name outside the supported set."""

    def __init__(self, name: str, supported: Iterable[str]):
        supported = sorted(supported)
        super().__init__(
            message=f"Unknown dataset '{name}'. Supported: {', '.join(supported)}",
            error_code="UNKNOWN_DATASET",
            details={"name": name, "supported": supported},
            exit_code=2,
        )


class DatasetError(GACDException):
    """Raised when an on-disk dataset archive is missing or corrupt."""

    def __init__(self, name: str, root: str, reason: str):
        super().__init__(
            message=f"Dataset '{name}' could not be loaded from '{root}': {reason}",
            error_code="DATASET_UNAVAILABLE",
            details={"name": name, "root": root},
            exit_code=3,
        )


class CheckpointError(GACDException):
    """Raised when a checkpoint is missing, corrupt or of the wrong kind."""

    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"Checkpoint '{path}': {reason}",
            error_code="CHECKPOINT_INVALID",
            details={"path": path},
            exit_code=3,
        )


class DegenerateProjectionError(GACDException):
    """Raised when a projection maps features to the zero vector."""

    def __init__(self, count: int):
        super().__init__(
            message=f"{count} feature vector(s) projected to zero and cannot be normalized",
            error_code="DEGENERATE_PROJECTION",
            details={"count": count},
        )


class NonFiniteError(GACDException):
    """Raised when logits, features or losses contain NaN or infinity."""

    def __init__(self, what: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=f"Non-finite values in {what}",
            error_code="NON_FINITE",
            details=details,
        )


class ShapeMismatchError(GACDException):
    """Raised when tensors have incompatible shapes."""

    def __init__(self, what: str, expected: Any, actual: Any):
        super().__init__(
            message=f"Shape mismatch in {what}: expected {expected}, got {actual}",
            error_code="SHAPE_MISMATCH",
            details={"expected": str(expected), "actual": str(actual)},
        )


class InsufficientNegativesError(GACDException):
    """Raised when the memory bank cannot supply the requested negatives."""

    def __init__(self, anchor_class: int, eligible: int, requested: int):
        super().__init__(
            message=(
                f"Class {anchor_class} has {eligible} eligible negative(s), "
                f"{requested} requested"
            ),
            error_code="INSUFFICIENT_NEGATIVES",
            details={
                "anchor_class": anchor_class,
                "eligible": eligible,
                "requested": requested,
            },
        )


class BankIndexError(GACDException):
    """Raised when a memory bank slot index is out of range."""

    def __init__(self, index: int, size: int):
        super().__init__(
            message=f"Memory bank index {index} out of range [0, {size})",
            error_code="BANK_INDEX",
            details={"index": index, "size": size},
        )


class ClassCountMismatchError(GACDException):
    """Raised when a model and a dataset disagree on the number of classes."""

    def __init__(self, model_classes: int, dataset_classes: int, what: str = "model"):
        super().__init__(
            message=(
                f"{what} predicts {model_classes} classes but the dataset has "
                f"{dataset_classes}"
            ),
            error_code="CLASS_COUNT_MISMATCH",
            details={"model": model_classes, "dataset": dataset_classes},
            exit_code=2,
        )


class FrozenBackboneError(GACDException):
    """Raised when a backbone that must stay frozen was modified."""

    def __init__(self, before: str, after: str, what: str = "backbone"):
        super().__init__(
            message=f"Frozen {what} parameters changed",
            error_code="FROZEN_BACKBONE_MODIFIED",
            details={"before": before, "after": after},
        )


class ReportMismatchError(GACDException):
    """Raised when result records cannot be combined into one table."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="REPORT_MISMATCH",
            details=details,
            exit_code=2,
        )


__all__ = [
    "GACDException",
    "ConfigValidationError",
    "UnknownDatasetError",
    "DatasetError",
    "CheckpointError",
    "DegenerateProjectionError",
    "NonFiniteError",
    "ShapeMismatchError",
    "InsufficientNegativesError",
    "BankIndexError",
    "ClassCountMismatchError",
    "FrozenBackboneError",
    "ReportMismatchError",
]
