"""
Soft-Label Knowledge Distillation Baseline

Temperature-softened KL to the teacher's outputs mixed with hard-label
cross-entropy, trained on the same data pipeline and schedule as the
contrastive distillation loop.
"""

from typing import List

import torch
import torch.nn.functional as F
from tqdm import tqdm

from gacd.config.settings import KDConfig, Settings
from gacd.models.networks import FeatureClassifier, build_model
from gacd.services.datasets import DatasetSplits, make_loader
from gacd.services.distill import freeze
from gacd.services.evaluation import evaluate
from gacd.services.training import make_optimizer
from gacd.utils.exceptions import ClassCountMismatchError, NonFiniteError
from gacd.utils.logger import logger
from gacd.utils.runtime import resolve_device, seed_everything


def soft_target_loss(
    student_logits: torch.Tensor, teacher_logits: torch.Tensor, temperature: float = 1.0
) -> torch.Tensor:
    """KL(teacher || student) on temperature-softened distributions, scaled by T^2."""
    log_p = F.log_softmax(student_logits / temperature, dim=1)
    q = F.softmax(teacher_logits / temperature, dim=1)
    return F.kl_div(log_p, q, reduction="batchmean") * (temperature**2)


def kd_loss(
    student_logits: torch.Tensor,
    teacher_logits: torch.Tensor,
    labels: torch.Tensor,
    cfg: KDConfig,
) -> torch.Tensor:
    """``alpha * T^2 * KL + (1 - alpha) * CE``."""
    soft = soft_target_loss(student_logits, teacher_logits, cfg.temperature)
    if cfg.alpha == 1.0:
        return soft
    hard = F.cross_entropy(student_logits, labels)
    return cfg.alpha * soft + (1.0 - cfg.alpha) * hard


def run_kd_baseline(
    settings: Settings, splits: DatasetSplits, teacher: FeatureClassifier
) -> FeatureClassifier:
    """
    Train a fresh student against the frozen teacher's soft labels.

    Uses ``settings.distill`` for epochs, batch size and the optimizer so the
    comparison with contrastive distillation is like for like.
    """
    if teacher.num_classes != splits.num_classes:
        raise ClassCountMismatchError(teacher.num_classes, splits.num_classes, "teacher")

    device = resolve_device(settings.app.device)
    report = evaluate(teacher, splits.test, None, model_id="teacher", dataset_id=splits.name)
    logger.info(f"Teacher natural accuracy: {report.natural_accuracy:.2f}%")

    seed_everything(settings.app.seed, settings.app.deterministic)
    teacher = freeze(teacher.to(device))
    student = build_model(settings.models.student_arch, splits.num_classes).to(device)
    optimizer, scheduler = make_optimizer(student, settings.distill)

    cfg = settings.distill
    losses: List[float] = []
    for epoch in range(cfg.epochs):
        loader = make_loader(
            splits.train,
            cfg.batch_size,
            shuffle=True,
            seed=settings.app.seed + epoch,
            num_workers=settings.dataset.num_workers,
        )
        student.train()
        running, seen = 0.0, 0
        for x, y, _ in tqdm(loader, desc=f"kd {epoch + 1}/{cfg.epochs}", disable=not settings.app.progress, leave=False):
            x, y = x.to(device), y.to(device)
            with torch.no_grad():
                teacher_logits = teacher(x)
            loss = kd_loss(student(x), teacher_logits, y, settings.kd)
            if not torch.isfinite(loss):
                raise NonFiniteError("KD loss", {"epoch": epoch})
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            running += loss.item() * y.numel()
            seen += y.numel()

        scheduler.step()
        losses.append(running / max(seen, 1))
        logger.info(f"kd epoch {epoch}: loss {losses[-1]:.4f}")

    student.eval()
    return student


__all__ = ["soft_target_loss", "kd_loss", "run_kd_baseline"]
