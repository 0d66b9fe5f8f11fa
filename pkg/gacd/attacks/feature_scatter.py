"""
Feature Scattering Positives

Label-free PGD that maximizes the optimal-transport distortion between the
clean and perturbed feature batches of an extractor.
"""

from typing import Callable, Optional

import torch

from gacd.attacks.pgd import AttackStats, signed_ascent
from gacd.attacks.sinkhorn import sinkhorn_distance
from gacd.config.settings import AttackBudget, OTConfig

FeatureExtractor = Callable[[torch.Tensor], torch.Tensor]


def feature_scatter_positive(
    extractor: FeatureExtractor,
    x: torch.Tensor,
    budget: AttackBudget,
    cfg: OTConfig,
    generator: Optional[torch.Generator] = None,
    stats: Optional[AttackStats] = None,
) -> torch.Tensor:
    """
    Perturb ``x`` within the budget to scatter its features away from the clean ones.

    No labels are used. The extractor's mode is left to the caller; the
    distillation loop runs it in inference mode so batch statistics are not
    disturbed by the attack.
    """
    x = x.detach()
    with torch.no_grad():
        clean = extractor(x).detach()

    def distortion(x_adv: torch.Tensor) -> torch.Tensor:
        return sinkhorn_distance(clean, extractor(x_adv), cfg)

    x_pos = x
    for x_pos in signed_ascent(distortion, x, budget, generator, stats):
        pass
    return x_pos.detach()


def feature_distortion(
    extractor: FeatureExtractor, x: torch.Tensor, x_pos: torch.Tensor, cfg: OTConfig
) -> float:
    """OT distance between clean and perturbed features, for monitoring."""
    with torch.no_grad():
        return float(sinkhorn_distance(extractor(x), extractor(x_pos), cfg))


__all__ = ["FeatureExtractor", "feature_scatter_positive", "feature_distortion"]
