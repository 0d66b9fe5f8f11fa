"""
L-infinity Projected Gradient Descent

``x_{n+1} = Proj(x_n + alpha * sign(grad_x loss(model(x_n), y)))`` projected onto
the epsilon-ball around the clean input and the [0, 1] pixel box.
"""

from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import torch
import torch.nn.functional as F
from torch import nn

from gacd.config.settings import AttackBudget
from gacd.utils.logger import logger

LossFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass
class AttackStats:
    """Diagnostics accumulated over attack calls."""

    attacked: int = 0
    nonfinite: int = 0
    last_failed: Optional[torch.Tensor] = None


def cross_entropy_sum(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Summed cross-entropy so per-sample gradients are independent of batch size."""
    return F.cross_entropy(logits, labels, reduction="sum")


def targeted_cross_entropy_sum(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Ascending this loss pushes every sample toward its target class."""
    return -F.cross_entropy(logits, targets, reduction="sum")


def project(x_adv: torch.Tensor, x: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Clip into the epsilon-ball around ``x`` and the [0, 1] box."""
    x_adv = torch.max(torch.min(x_adv, x + epsilon), x - epsilon)
    return x_adv.clamp(0.0, 1.0)


def random_start(
    x: torch.Tensor, epsilon: float, generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    noise = torch.rand(x.shape, generator=generator, dtype=x.dtype).to(x.device)
    return project(x + (2 * noise - 1) * epsilon, x, epsilon)


def input_gradient(objective: torch.Tensor, x_adv: torch.Tensor) -> torch.Tensor:
    """Gradient of a scalar objective w.r.t. the input; zeros if the input is unused."""
    if not objective.requires_grad:
        return torch.zeros_like(x_adv)
    (grad,) = torch.autograd.grad(objective, x_adv, allow_unused=True)
    return torch.zeros_like(x_adv) if grad is None else grad


def signed_ascent(
    objective_fn: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    budget: AttackBudget,
    generator: Optional[torch.Generator] = None,
    stats: Optional[AttackStats] = None,
) -> Iterator[torch.Tensor]:
    """
    Yield every iterate of signed-gradient ascent on ``objective_fn`` within the budget.

    The first yielded tensor is the starting point. Samples whose gradient
    becomes non-finite are frozen at their clean input from then on.
    """
    x = x.detach()
    x_adv = x.clone()
    if budget.epsilon == 0:
        if stats is not None:
            stats.last_failed = torch.zeros(x.shape[0], dtype=torch.bool, device=x.device)
        yield x_adv
        return
    if budget.random_start:
        x_adv = random_start(x, budget.epsilon, generator)
    yield x_adv

    failed = torch.zeros(x.shape[0], dtype=torch.bool, device=x.device)
    for _ in range(budget.steps):
        x_adv = x_adv.detach().requires_grad_(True)
        with torch.enable_grad():
            grad = input_gradient(objective_fn(x_adv), x_adv)

        bad = ~torch.isfinite(grad).flatten(1).all(dim=1)
        failed |= bad
        grad = torch.where(bad.view(-1, *[1] * (x.dim() - 1)), torch.zeros_like(grad), grad)

        x_adv = project(x_adv.detach() + budget.step_size * grad.sign(), x, budget.epsilon)
        x_adv[failed] = x[failed]
        yield x_adv

    if stats is not None:
        stats.attacked += x.shape[0]
        stats.nonfinite += int(failed.sum())
        stats.last_failed = failed
    if failed.any():
        logger.warning(f"Attack aborted for {int(failed.sum())} sample(s): non-finite gradients")


def pgd_iterates(
    model: nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    budget: AttackBudget,
    loss_fn: LossFn = cross_entropy_sum,
    generator: Optional[torch.Generator] = None,
    stats: Optional[AttackStats] = None,
) -> Iterator[torch.Tensor]:
    """Every PGD iterate, starting point included."""
    return signed_ascent(lambda z: loss_fn(model(z), y), x, budget, generator, stats)


def pgd_attack(
    model: nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    budget: AttackBudget,
    loss_fn: LossFn = cross_entropy_sum,
    generator: Optional[torch.Generator] = None,
    stats: Optional[AttackStats] = None,
) -> torch.Tensor:
    """
    Craft an L-infinity adversarial batch.

    Args:
        model: Differentiable classifier; its train/eval mode is left to the caller.
        x: Clean batch with pixels in [0, 1].
        y: Labels (or targets, for a targeted ``loss_fn``).
        budget: Epsilon, steps, step size and random-start flag.
        loss_fn: Objective ascended by the attack, summed over the batch.
        generator: Source of the random start.
        stats: Optional diagnostics accumulator.

    Returns:
        The final iterate, detached.
    """
    x_adv = x
    for x_adv in pgd_iterates(model, x, y, budget, loss_fn, generator, stats):
        pass
    return x_adv.detach()


__all__ = [
    "AttackStats",
    "LossFn",
    "cross_entropy_sum",
    "targeted_cross_entropy_sum",
    "project",
    "random_start",
    "signed_ascent",
    "pgd_iterates",
    "pgd_attack",
]
