"""
Entropic Optimal Transport in Log Space

Sinkhorn iterations on dual potentials with uniform marginals, used as the
feature distortion for label-free positive construction.
"""

import math

import torch
import torch.nn.functional as F

from gacd.config.settings import OTConfig
from gacd.utils.exceptions import NonFiniteError, ShapeMismatchError


def cosine_cost(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Ground cost ``1 - cos(a_i, b_j)`` between two feature batches."""
    if a.dim() != 2 or b.dim() != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatchError("feature batches", "(n, d) and (m, d)", (tuple(a.shape), tuple(b.shape)))
    return 1.0 - F.normalize(a, dim=1) @ F.normalize(b, dim=1).T


def sinkhorn_plan(cost: torch.Tensor, reg: float, iterations: int) -> torch.Tensor:
    """Transport plan for uniform marginals, computed from log-domain potentials."""
    n, m = cost.shape
    log_a = torch.full((n,), -math.log(n), dtype=cost.dtype, device=cost.device)
    log_b = torch.full((m,), -math.log(m), dtype=cost.dtype, device=cost.device)

    scaled = -cost / reg
    u = torch.zeros_like(log_a)
    v = torch.zeros_like(log_b)
    for _ in range(iterations):
        v = log_b - torch.logsumexp(scaled + u[:, None], dim=0)
        u = log_a - torch.logsumexp(scaled + v[None, :], dim=1)
    return torch.exp(scaled + u[:, None] + v[None, :])


def entropic_transport_cost(cost: torch.Tensor, cfg: OTConfig) -> torch.Tensor:
    """
    ``<P, C>`` for the entropic plan P of cost matrix C.

    Both orientations are solved and averaged so the value is symmetric under
    transposition at any iteration count. The plan is treated as constant
    for differentiation.
    """
    if not torch.isfinite(cost).all():
        raise NonFiniteError("transport cost")
    forward = sinkhorn_plan(cost.detach(), cfg.reg, cfg.iterations)
    backward = sinkhorn_plan(cost.detach().T, cfg.reg, cfg.iterations)
    return 0.5 * ((forward * cost).sum() + (backward * cost.T).sum())


def sinkhorn_distance(a: torch.Tensor, b: torch.Tensor, cfg: OTConfig) -> torch.Tensor:
    """Entropic OT cost between two equally sized feature batches under the cosine cost."""
    if a.shape != b.shape or a.dim() != 2 or a.shape[0] < 1:
        raise ShapeMismatchError("sinkhorn inputs", "two (n, d) batches", (tuple(a.shape), tuple(b.shape)))
    if not (torch.isfinite(a).all() and torch.isfinite(b).all()):
        raise NonFiniteError("features")
    return entropic_transport_cost(cosine_cost(a, b), cfg)


__all__ = ["cosine_cost", "sinkhorn_plan", "entropic_transport_cost", "sinkhorn_distance"]
