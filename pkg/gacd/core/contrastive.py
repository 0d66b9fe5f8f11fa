"""
Sample-Reweighted Noise Contrastive Estimation

Closed-form critic h(t, s) = e^{t.s/T} / (e^{t.s/T} + k/M), the reweighted
contrastive log-likelihood over a congruent pair plus k incongruent pairs, and
the mutual-information lower bound it tightens.

All logs are natural logs. The critic is evaluated through its logit
``t.s/T - log(k/M)`` so no exponential is ever formed explicitly.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field

from gacd.config.settings import CriticSettings
from gacd.utils.exceptions import ConfigValidationError, ShapeMismatchError

UNIT_NORM_TOLERANCE = 1e-3


class CriticConfig(BaseModel):
    """Critic temperature T, negative count k and dataset cardinality M."""

    temperature: float = Field(0.1, gt=0)
    num_negatives: int = Field(16384, ge=1)
    num_samples: int = Field(..., ge=1)
    logit_clamp: float = Field(50.0, gt=0)

    @classmethod
    def from_settings(cls, settings: CriticSettings, num_samples: int) -> "CriticConfig":
        return cls(
            temperature=settings.temperature,
            num_negatives=settings.num_negatives,
            num_samples=num_samples,
            logit_clamp=settings.logit_clamp,
        )

    @property
    def log_noise_ratio(self) -> float:
        """log(k / M)"""
        return math.log(self.num_negatives) - math.log(self.num_samples)


@dataclass
class SaturationCounter:
    """Counts critic logits clipped at the configured bound."""

    count: int = 0

    def record(self, mask: torch.Tensor) -> None:
        self.count += int(mask.sum())


@dataclass
class SamplePairSet:
    """
    Anchors with their congruent positive and k incongruent negatives.

    Shapes: ``anchor`` and ``positive`` are ``(B, d)``, ``negatives`` is
    ``(B, k, d)`` and ``weight`` is ``(B,)``. A single unbatched set is
    promoted to a batch of one.
    """

    anchor: torch.Tensor
    positive: torch.Tensor
    negatives: torch.Tensor
    weight: torch.Tensor

    def __post_init__(self):
        if self.anchor.dim() == 1:
            self.anchor = self.anchor.unsqueeze(0)
            self.positive = self.positive.unsqueeze(0)
            self.negatives = self.negatives.unsqueeze(0)
        self.weight = torch.as_tensor(
            self.weight, dtype=self.anchor.dtype, device=self.anchor.device
        ).reshape(-1)

        batch, dim = self.anchor.shape
        if self.positive.shape != (batch, dim):
            raise ShapeMismatchError("positive", (batch, dim), tuple(self.positive.shape))
        if self.negatives.dim() != 3 or self.negatives.shape[::2] != (batch, dim):
            raise ShapeMismatchError(
                "negatives", (batch, "k", dim), tuple(self.negatives.shape)
            )
        if self.weight.shape != (batch,):
            raise ShapeMismatchError("weight", (batch,), tuple(self.weight.shape))

        for name in ("anchor", "positive", "negatives"):
            norms = getattr(self, name).detach().norm(dim=-1)
            if ((norms - 1).abs() > UNIT_NORM_TOLERANCE).any():
                raise ShapeMismatchError(f"{name} norm", 1.0, float(norms.max()))

    @property
    def num_negatives(self) -> int:
        return self.negatives.shape[1]


def critic_logit(
    t: torch.Tensor,
    s: torch.Tensor,
    cfg: CriticConfig,
    counter: SaturationCounter | None = None,
) -> torch.Tensor:
    """Logit of h: ``t.s / T - log(k/M)`` over the last dimension, clamped."""
    if t.shape[-1] != s.shape[-1]:
        raise ShapeMismatchError("critic inputs", t.shape[-1], s.shape[-1])

    logits = (t * s).sum(dim=-1) / cfg.temperature - cfg.log_noise_ratio
    if counter is not None:
        counter.record(logits.detach().abs() > cfg.logit_clamp)
    return logits.clamp(-cfg.logit_clamp, cfg.logit_clamp)


def critic_h(t: torch.Tensor, s: torch.Tensor, cfg: CriticConfig) -> torch.Tensor:
    """Posterior estimate that (t, s) is a congruent pair; strictly inside (0, 1)."""
    return torch.sigmoid(critic_logit(t, s, cfg))


def nce_log_likelihood(
    pairs: SamplePairSet,
    cfg: CriticConfig,
    counter: SaturationCounter | None = None,
) -> torch.Tensor:
    """
    Unweighted per-anchor likelihood
    ``log h(t+, s+) + sum_i log(1 - h(t+, s_i-))``, shape ``(B,)``.
    """
    if pairs.num_negatives != cfg.num_negatives:
        raise ShapeMismatchError("negative count", cfg.num_negatives, pairs.num_negatives)

    pos_logit = critic_logit(pairs.anchor, pairs.positive, cfg, counter)
    neg_logit = critic_logit(pairs.anchor.unsqueeze(1), pairs.negatives, cfg, counter)
    return F.logsigmoid(pos_logit) + F.logsigmoid(-neg_logit).sum(dim=1)


def reweighted_nce_objective(
    pairs: SamplePairSet,
    cfg: CriticConfig,
    counter: SaturationCounter | None = None,
) -> torch.Tensor:
    """
    Per-anchor reweighted log-likelihood ``w_t * (log h+ + sum log(1 - h-))``.

    Both terms share the anchor's teacher weight. Values are always <= 0 and
    the trainer minimizes their negated batch mean.
    """
    return pairs.weight * nce_log_likelihood(pairs, cfg, counter)


def mi_lower_bound(expected_log_posterior: float, k: int) -> float:
    """``log(k) + E[log posterior]``, a lower bound on teacher/student MI in nats."""
    if k < 1:
        raise ConfigValidationError(f"negative count must be >= 1, got {k}")
    return math.log(k) + float(expected_log_posterior)


__all__ = [
    "CriticConfig",
    "SaturationCounter",
    "SamplePairSet",
    "critic_logit",
    "critic_h",
    "nce_log_likelihood",
    "reweighted_nce_objective",
    "mi_lower_bound",
]
