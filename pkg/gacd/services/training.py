"""
Adversarial Training

Madry-protocol training on PGD-perturbed inputs: used to produce robust
teachers from scratch and to fine-tune distilled students end to end.
"""

from typing import List

import torch
import torch.nn.functional as F
from tqdm import tqdm

from gacd.attacks.pgd import AttackStats, pgd_attack
from gacd.config.settings import AdversarialTrainingConfig, OptimConfig, Settings
from gacd.models.networks import FeatureClassifier, build_model
from gacd.services.datasets import DatasetSplits, IndexedTensorDataset, make_loader
from gacd.utils.exceptions import ClassCountMismatchError, NonFiniteError
from gacd.utils.logger import logger
from gacd.utils.runtime import evaluating, make_generator, resolve_device, seed_everything


def make_optimizer(model: torch.nn.Module, cfg: OptimConfig):
    """SGD with momentum plus its step-decay schedule."""
    optimizer = torch.optim.SGD(
        model.parameters(), lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.MultiStepLR(
        optimizer, milestones=cfg.lr_milestones, gamma=cfg.lr_gamma
    )
    return optimizer, scheduler


def adversarial_train(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    cfg: AdversarialTrainingConfig,
    seed: int = 0,
    device: torch.device | str = "cpu",
    progress: bool = False,
    desc: str = "adv-train",
) -> List[float]:
    """
    Train every parameter of ``model`` on PGD examples with cross-entropy.

    Attacks are crafted with the model in inference mode; the update runs in
    training mode. Returns the mean training loss of each epoch.
    """
    device = torch.device(device)
    model.to(device)
    for param in model.parameters():
        param.requires_grad_(True)

    optimizer, scheduler = make_optimizer(model, cfg)
    generator = make_generator(seed)
    stats = AttackStats()
    losses: List[float] = []

    for epoch in range(cfg.epochs):
        loader = make_loader(dataset, cfg.batch_size, shuffle=True, seed=seed + epoch)
        running, seen = 0.0, 0
        for x, y, _ in tqdm(loader, desc=f"{desc} {epoch + 1}/{cfg.epochs}", disable=not progress, leave=False):
            x, y = x.to(device), y.to(device)
            with evaluating(model):
                x_adv = pgd_attack(model, x, y, cfg.budget, generator=generator, stats=stats)

            model.train()
            loss = F.cross_entropy(model(x_adv), y)
            if not torch.isfinite(loss):
                raise NonFiniteError("adversarial training loss", {"epoch": epoch})
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()

            running += loss.item() * y.numel()
            seen += y.numel()

        scheduler.step()
        losses.append(running / max(seen, 1))
        logger.info(f"{desc} epoch {epoch}: loss {losses[-1]:.4f}, lr {scheduler.get_last_lr()[0]:.4g}")

    model.eval()
    if stats.nonfinite:
        logger.warning(f"{desc}: {stats.nonfinite} attack(s) hit non-finite gradients")
    return losses


def adversarial_finetune(
    student: FeatureClassifier,
    splits: DatasetSplits,
    cfg: AdversarialTrainingConfig,
    seed: int = 0,
    device: torch.device | str = "cpu",
    progress: bool = False,
) -> FeatureClassifier:
    """
    Full-network adversarial fine-tuning of a distilled student.

    The classification head is re-initialized first, then all layers are
    trained.
    """
    if student.num_classes != splits.num_classes:
        raise ClassCountMismatchError(student.num_classes, splits.num_classes, "student")

    student.reset_head(make_generator(seed))
    adversarial_train(student, splits.train, cfg, seed=seed, device=device, progress=progress, desc="finetune")
    return student


def train_teacher(settings: Settings, splits: DatasetSplits) -> FeatureClassifier:
    """Adversarially train a teacher from scratch on the source dataset."""
    seed_everything(settings.app.seed, settings.app.deterministic)
    teacher = build_model(settings.models.teacher_arch, splits.num_classes)
    logger.info(
        f"Training {teacher.arch} teacher with {settings.teacher_training.budget.describe()} "
        f"for {settings.teacher_training.epochs} epochs"
    )
    adversarial_train(
        teacher,
        splits.train,
        settings.teacher_training,
        seed=settings.app.seed,
        device=resolve_device(settings.app.device),
        progress=settings.app.progress,
        desc="teacher",
    )
    return teacher


__all__ = ["make_optimizer", "adversarial_train", "adversarial_finetune", "train_teacher"]
