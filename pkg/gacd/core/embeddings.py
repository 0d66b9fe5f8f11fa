"""
Shared Embedding Space

Projection of penultimate backbone features into the unit-norm embedding
space shared by teacher and student, and the teacher confidence weight.
"""

import torch
import torch.nn.functional as F
from torch import nn

from gacd.utils.exceptions import (
    DegenerateProjectionError,
    NonFiniteError,
    ShapeMismatchError,
)

ZERO_NORM_EPS = 1e-12


class ProjectionHead(nn.Module):
    """
    Single linear map from backbone width to the embedding dimension.

    The head is bias-free by default so that projections are scale-invariant.
    Both the teacher-side and student-side heads are trained during
    distillation.
    """

    def __init__(self, in_dim: int, feat_dim: int = 128, bias: bool = False):
        super().__init__()
        self.in_dim = in_dim
        self.feat_dim = feat_dim
        self.linear = nn.Linear(in_dim, feat_dim, bias=bias)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return project_and_normalize(feats, self)


def project_and_normalize(feats: torch.Tensor, head: ProjectionHead) -> torch.Tensor:
    """
    Map backbone features (``(D,)`` or ``(B, D)``) to unit-norm embeddings.

    Raises:
        ShapeMismatchError: If the feature width differs from the head input.
        NonFiniteError: If features contain NaN or infinity.
        DegenerateProjectionError: If any projection is the zero vector.
    """
    if feats.shape[-1] != head.in_dim:
        raise ShapeMismatchError("projection input", head.in_dim, feats.shape[-1])
    if not torch.isfinite(feats).all():
        raise NonFiniteError("backbone features")

    z = head.linear(feats)
    norms = z.norm(dim=-1, keepdim=True)
    degenerate = int((norms <= ZERO_NORM_EPS).sum())
    if degenerate:
        raise DegenerateProjectionError(degenerate)
    return z / norms


def teacher_weight(teacher_logits: torch.Tensor, true_label: torch.Tensor | int) -> torch.Tensor:
    """
    Softmax probability (temperature 1) the teacher assigns to the true class.

    Accepts a single logit vector with an integer label, or a ``(B, K)`` batch
    with a ``(B,)`` label tensor.
    """
    if not torch.isfinite(teacher_logits).all():
        raise NonFiniteError("teacher logits")

    num_classes = teacher_logits.shape[-1]
    labels = torch.as_tensor(true_label, device=teacher_logits.device, dtype=torch.long)
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeMismatchError("true label", f"[0, {num_classes})", labels.tolist())

    probs = F.softmax(teacher_logits, dim=-1)
    if probs.dim() == 1:
        return probs[labels]
    return probs.gather(1, labels.view(-1, 1)).squeeze(1)


__all__ = ["ProjectionHead", "project_and_normalize", "teacher_weight"]
