"""
Memory Bank of Student Embeddings

Per-instance store of momentum-updated unit-norm student embeddings with
immutable class labels. Supplies class-exclusive negatives for every anchor.
Memory bank (M) = N x d, N: dataset size, d: embedding dimension.
"""

from typing import Any, Dict, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from gacd.utils.exceptions import (
    BankIndexError,
    ConfigValidationError,
    InsufficientNegativesError,
    ShapeMismatchError,
)
from gacd.utils.logger import logger


class MemoryBank(nn.Module):
    """
    Parameters
    ----------
    labels : torch.LongTensor
        class label of every instance, shape N
    dim : int
        embedding dimension
    momentum : float
        weight of the stored vector in ``normalize(m * old + (1 - m) * new)``
    generator : torch.Generator, optional
        source of the isotropic initialization
    """

    eps = 1e-6

    def __init__(
        self,
        labels: torch.Tensor,
        dim: int,
        momentum: float = 0.5,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        if not 0 <= momentum <= 1:
            raise ConfigValidationError(f"bank momentum must lie in [0, 1], got {momentum}")

        labels = torch.as_tensor(labels, dtype=torch.long).clone()
        if labels.dim() != 1 or labels.numel() == 0:
            raise ShapeMismatchError("bank labels", "(N,) with N > 0", tuple(labels.shape))

        self.dim = dim
        self.momentum = momentum
        memory = torch.randn(labels.numel(), dim, generator=generator)
        self.register_buffer("memory", F.normalize(memory, dim=1))
        self.register_buffer("labels", labels)

    @property
    def size(self) -> int:
        return self.memory.shape[0]

    def get_extra_state(self) -> Dict[str, Any]:
        return {"momentum": self.momentum, "dim": self.dim}

    def set_extra_state(self, state: Dict[str, Any]) -> None:
        self.momentum = state["momentum"]
        self.dim = state["dim"]

    def _load_from_state_dict(self, state_dict, prefix, *args, **kwargs):
        stored = state_dict.get(prefix + "labels")
        if stored is not None and not torch.equal(stored.to(self.labels.device), self.labels):
            raise ShapeMismatchError("bank labels", "labels of this bank", "different labels")
        super()._load_from_state_dict(state_dict, prefix, *args, **kwargs)

    @torch.no_grad()
    def sample_negatives(
        self,
        anchor_labels: torch.Tensor,
        k: int,
        generator: torch.Generator | None = None,
        replacement: bool = True,
    ) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Draw k negatives per anchor uniformly over instances of other classes.

        Returns:
            Tuple of (embeddings ``(B, k, d)``, indices ``(B, k)``).
        """
        anchor_labels = anchor_labels.to(self.labels.device).reshape(-1)
        indices = torch.empty(anchor_labels.numel(), k, dtype=torch.long, device=self.labels.device)

        for cls in torch.unique(anchor_labels).tolist():
            rows = (anchor_labels == cls).nonzero(as_tuple=True)[0]
            eligible = (self.labels != cls).nonzero(as_tuple=True)[0]
            if eligible.numel() == 0 or (not replacement and eligible.numel() < k):
                raise InsufficientNegativesError(cls, eligible.numel(), k)

            if replacement:
                picks = torch.randint(
                    eligible.numel(), (rows.numel(), k), generator=generator
                ).to(eligible.device)
            else:
                picks = torch.stack(
                    [
                        torch.randperm(eligible.numel(), generator=generator)[:k]
                        for _ in range(rows.numel())
                    ]
                ).to(eligible.device)
            indices[rows] = eligible[picks]

        return self.memory[indices].clone(), indices

    @torch.no_grad()
    def update(self, index: torch.Tensor, new_embedding: torch.Tensor) -> None:
        """Momentum update ``slot <- normalize(m * slot + (1 - m) * new)``."""
        index = torch.as_tensor(index, dtype=torch.long, device=self.memory.device).reshape(-1)
        new_embedding = new_embedding.detach().to(self.memory).reshape(-1, self.dim)
        if index.numel() != new_embedding.shape[0]:
            raise ShapeMismatchError("bank update", index.numel(), new_embedding.shape[0])

        out_of_range = (index < 0) | (index >= self.size)
        if out_of_range.any():
            raise BankIndexError(int(index[out_of_range][0]), self.size)

        if self.momentum == 0:
            self.memory[index] = new_embedding
            return
        mixed = self.momentum * self.memory[index] + (1 - self.momentum) * new_embedding
        # an antipodal pair cancels; the slot takes the new direction
        cancelled = mixed.norm(dim=1, keepdim=True) < self.eps
        mixed = torch.where(cancelled, new_embedding, mixed)
        self.memory[index] = F.normalize(mixed, dim=1)


def bank_init(
    num_samples: int,
    dim: int,
    labels: torch.Tensor,
    seed: int,
    momentum: float = 0.5,
) -> MemoryBank:
    """Create a bank of ``num_samples`` seeded isotropic unit vectors."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() != num_samples:
        raise ShapeMismatchError("bank labels", num_samples, labels.numel())
    generator = torch.Generator().manual_seed(seed)
    bank = MemoryBank(labels, dim, momentum=momentum, generator=generator)
    logger.debug(f"Memory bank initialized: {num_samples} x {dim}, momentum {momentum}")
    return bank


__all__ = ["MemoryBank", "bank_init"]
