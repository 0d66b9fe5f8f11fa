"""Experiment pipeline services"""

from .datasets import DatasetSplits, IndexedTensorDataset, ingest_dataset, make_synthetic
from .checkpoints import load_checkpoint, load_classifier, save_checkpoint, save_classifier
from .results import ResultLog, render_report
from .evaluation import evaluate, fit_linear_probe, linear_probe_transfer
from .training import adversarial_finetune, adversarial_train, train_teacher
from .distill import ContrastiveDistiller, run_distillation
from .kd import kd_loss, run_kd_baseline
from .analysis import (
    correlation_difference,
    export_features,
    logits_correlation,
    run_analysis,
)

__all__ = [
    "DatasetSplits",
    "IndexedTensorDataset",
    "ingest_dataset",
    "make_synthetic",
    "load_checkpoint",
    "load_classifier",
    "save_checkpoint",
    "save_classifier",
    "ResultLog",
    "render_report",
    "evaluate",
    "fit_linear_probe",
    "linear_probe_transfer",
    "adversarial_finetune",
    "adversarial_train",
    "train_teacher",
    "ContrastiveDistiller",
    "run_distillation",
    "kd_loss",
    "run_kd_baseline",
    "correlation_difference",
    "export_features",
    "logits_correlation",
    "run_analysis",
]
