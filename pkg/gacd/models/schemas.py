"""
Pydantic Schemas for Results

Structured records written by the experiment runner: evaluation reports,
per-epoch distillation metrics and the append-only result log entries.
"""

from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Optional
from uuid import UUID, uuid4

from pydantic import BaseModel, Field, model_validator

from gacd import __version__

# Slack for "adversarial <= natural" across separately rounded percentages
ACCURACY_TIE_TOLERANCE = 1e-9


class Stage(str, Enum):
    """Pipeline stage that produced a record"""

    TEACHER = "teacher"
    DISTILL = "distill"
    KD = "kd"
    FINETUNE = "finetune"
    EVAL = "eval"
    TRANSFER = "transfer"
    ANALYZE = "analyze"
    SWEEP = "sweep"


class EvalReport(BaseModel):
    """Natural and adversarial accuracy of one model on one dataset split"""

    model_id: str
    dataset_id: str
    num_classes: int = Field(..., ge=2)
    num_samples: int = Field(..., ge=1)
    natural_accuracy: float = Field(..., ge=0.0, le=100.0)
    adversarial_accuracy: Optional[float] = Field(None, ge=0.0, le=100.0)
    final_iterate_accuracy: Optional[float] = Field(
        None, ge=0.0, le=100.0, description="accuracy on the last PGD iterate alone"
    )
    attack: Optional[str] = None
    attack_failures: int = Field(0, ge=0)

    @model_validator(mode="after")
    def check_dominance(self) -> "EvalReport":
        """Adversarial accuracy never exceeds natural accuracy."""
        if (
            self.adversarial_accuracy is not None
            and self.adversarial_accuracy > self.natural_accuracy + ACCURACY_TIE_TOLERANCE
        ):
            raise ValueError("adversarial accuracy exceeds natural accuracy")
        return self


class EpochMetrics(BaseModel):
    """One line of the distillation metrics log"""

    epoch: int = Field(..., ge=0)
    objective: float = Field(..., ge=0.0, description="batch-mean of -l")
    log_likelihood: float = Field(..., le=0.0, description="unweighted mean likelihood")
    mi_lower_bound: float
    mean_weight: float = Field(..., ge=0.0, le=1.0)
    saturated: int = Field(0, ge=0)
    wall_time: float = Field(..., ge=0.0)


class ResultRecord(BaseModel):
    """Append-only result log entry"""

    run_id: UUID = Field(default_factory=uuid4)
    config_hash: str
    stage: Stage
    metrics: Dict[str, Any] = {}
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: Optional[datetime] = None
    code_version: str = __version__


__all__ = ["Stage", "EvalReport", "EpochMetrics", "ResultRecord"]
