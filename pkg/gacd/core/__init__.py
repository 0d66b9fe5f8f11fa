"""Contrastive distillation core: embeddings, critic, objective and memory bank."""

from .embeddings import ProjectionHead, project_and_normalize, teacher_weight
from .contrastive import (
    CriticConfig,
    SamplePairSet,
    SaturationCounter,
    critic_h,
    critic_logit,
    mi_lower_bound,
    nce_log_likelihood,
    reweighted_nce_objective,
)
from .memory_bank import MemoryBank, bank_init

__all__ = [
    "ProjectionHead",
    "project_and_normalize",
    "teacher_weight",
    "CriticConfig",
    "SamplePairSet",
    "SaturationCounter",
    "critic_h",
    "critic_logit",
    "mi_lower_bound",
    "nce_log_likelihood",
    "reweighted_nce_objective",
    "MemoryBank",
    "bank_init",
]
