"""Adversarial input crafting: supervised PGD and label-free feature scattering."""

from .pgd import (
    AttackStats,
    cross_entropy_sum,
    pgd_attack,
    pgd_iterates,
    targeted_cross_entropy_sum,
)
from .sinkhorn import cosine_cost, entropic_transport_cost, sinkhorn_distance
from .feature_scatter import feature_distortion, feature_scatter_positive

__all__ = [
    "AttackStats",
    "cross_entropy_sum",
    "pgd_attack",
    "pgd_iterates",
    "targeted_cross_entropy_sum",
    "cosine_cost",
    "entropic_transport_cost",
    "sinkhorn_distance",
    "feature_distortion",
    "feature_scatter_positive",
]
