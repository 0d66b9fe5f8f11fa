"""Data Models Package"""

# Networks
from .networks import FeatureClassifier, build_model

# Result schemas
from .schemas import EpochMetrics, EvalReport, ResultRecord, Stage

__all__ = [
    # Networks
    "FeatureClassifier",
    "build_model",
    # Result schemas
    "EpochMetrics",
    "EvalReport",
    "ResultRecord",
    "Stage",
]
