"""
Robustness Evaluation and Linear Probing

Natural and PGD accuracy of a classifier, and linear evaluation of a frozen
backbone on the source or a transfer dataset.
"""

import copy
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn
from tqdm import tqdm

from gacd.attacks.pgd import AttackStats, pgd_iterates
from gacd.config.settings import AttackBudget, ProbeConfig
from gacd.models.networks import FeatureClassifier
from gacd.models.schemas import EvalReport
from gacd.services.datasets import DatasetSplits, IndexedTensorDataset, make_loader, resize_images
from gacd.utils.exceptions import (
    ClassCountMismatchError,
    ConfigValidationError,
    FrozenBackboneError,
)
from gacd.utils.logger import logger
from gacd.utils.runtime import evaluating, make_generator, parameter_fingerprint


def _check_labels(model: FeatureClassifier, dataset: IndexedTensorDataset, num_classes: Optional[int]) -> None:
    if len(dataset) == 0:
        raise ConfigValidationError("evaluation split is empty")
    if num_classes is not None and num_classes != model.num_classes:
        raise ClassCountMismatchError(model.num_classes, num_classes)
    observed = int(dataset.labels.max()) + 1
    if observed > model.num_classes:
        raise ClassCountMismatchError(model.num_classes, observed)


def evaluate(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    budget: Optional[AttackBudget],
    model_id: str = "model",
    dataset_id: str = "dataset",
    num_classes: Optional[int] = None,
    batch_size: int = 256,
    seed: int = 0,
    device: torch.device | str = "cpu",
    progress: bool = False,
) -> EvalReport:
    """
    Natural accuracy, plus PGD accuracy when a budget is given.

    A sample counts as robust only if the model classifies the clean input
    and every PGD iterate correctly, so a longer attack with the same start
    can never report a higher robust accuracy than a shorter one. The
    conventional last-iterate PGD accuracy is reported alongside.

    Raises:
        ClassCountMismatchError: If the model head and dataset disagree on K.
        ConfigValidationError: If the split is empty.
    """
    _check_labels(model, dataset, num_classes)
    device = torch.device(device)
    model = model.to(device)
    generator = make_generator(seed)
    stats = AttackStats()

    natural = 0
    robust_total = 0
    final_total = 0
    with evaluating(model):
        loader = make_loader(dataset, batch_size, shuffle=False)
        for x, y, _ in tqdm(loader, desc=f"eval {model_id}", disable=not progress, leave=False):
            x, y = x.to(device), y.to(device)
            with torch.no_grad():
                correct = model(x).argmax(dim=1) == y
            natural += int(correct.sum())

            if budget is None:
                continue
            robust = correct.clone()
            final = correct.clone()
            for x_adv in pgd_iterates(model, x, y, budget, generator=generator, stats=stats):
                with torch.no_grad():
                    final = model(x_adv).argmax(dim=1) == y
                robust &= final
            robust_total += int(robust.sum())
            final_total += int(final.sum())

    total = len(dataset)
    report = EvalReport(
        model_id=model_id,
        dataset_id=dataset_id,
        num_classes=model.num_classes,
        num_samples=total,
        natural_accuracy=100.0 * natural / total,
        adversarial_accuracy=None if budget is None else 100.0 * robust_total / total,
        final_iterate_accuracy=None if budget is None else 100.0 * final_total / total,
        attack=None if budget is None else budget.describe(),
        attack_failures=stats.nonfinite,
    )
    logger.info(
        f"{model_id} on {dataset_id}: nat {report.natural_accuracy:.2f}%"
        + ("" if budget is None else f", adv {report.adversarial_accuracy:.2f}% ({report.attack})")
    )
    return report


@torch.no_grad()
def extract_features(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    batch_size: int = 256,
    device: torch.device | str = "cpu",
) -> torch.Tensor:
    """Penultimate features of every sample, in dataset order."""
    device = torch.device(device)
    model = model.to(device)
    chunks = []
    with evaluating(model):
        for x, _, _ in make_loader(dataset, batch_size, shuffle=False):
            chunks.append(model.features(x.to(device)).cpu())
    return torch.cat(chunks) if chunks else torch.empty(0, model.feature_dim)


def fit_linear_probe(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    num_classes: int,
    cfg: ProbeConfig,
    seed: int = 0,
    device: torch.device | str = "cpu",
) -> FeatureClassifier:
    """
    Train a linear head on frozen features of clean images.

    Returns a copy of ``model`` whose head is the trained probe; ``model``
    itself is not modified.

    Raises:
        FrozenBackboneError: If the backbone parameters changed.
    """
    before = parameter_fingerprint(model.backbone)
    features = extract_features(model, dataset, cfg.batch_size, device)
    labels = dataset.labels.to(features.device)

    torch.manual_seed(seed)
    head = nn.Linear(model.feature_dim, num_classes)
    optimizer = torch.optim.SGD(head.parameters(), lr=cfg.lr, momentum=0.9, weight_decay=cfg.weight_decay)
    generator = make_generator(seed)
    for epoch in range(cfg.epochs):
        order = torch.randperm(labels.numel(), generator=generator)
        total = 0.0
        for start in range(0, labels.numel(), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = F.cross_entropy(head(features[idx]), labels[idx])
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += loss.item() * idx.numel()
        logger.debug(f"probe epoch {epoch}: loss {total / max(labels.numel(), 1):.4f}")

    after = parameter_fingerprint(model.backbone)
    if after != before:
        raise FrozenBackboneError(before, after)

    probe = copy.deepcopy(model)
    probe.head = head.to(device)
    probe.num_classes = num_classes
    return probe


def linear_probe_transfer(
    model: FeatureClassifier,
    splits: DatasetSplits,
    cfg: ProbeConfig,
    budget: Optional[AttackBudget],
    input_size: Optional[int] = None,
    model_id: str = "model",
    seed: int = 0,
    device: torch.device | str = "cpu",
    progress: bool = False,
) -> EvalReport:
    """
    Linear evaluation of a frozen backbone on ``splits``.

    Images are bilinearly resized to ``input_size`` first. The probe is
    trained on clean training images; the composite (backbone + probe) is
    then attacked end to end on the test split.
    """
    train, test = splits.train, splits.test
    if input_size is not None:
        train, test = resize_images(train, input_size), resize_images(test, input_size)

    probe = fit_linear_probe(model, train, splits.num_classes, cfg, seed=seed, device=device)
    return evaluate(
        probe,
        test,
        budget,
        model_id=model_id,
        dataset_id=splits.name,
        num_classes=splits.num_classes,
        seed=seed,
        device=device,
        progress=progress,
    )


__all__ = [
    "evaluate",
    "extract_features",
    "fit_linear_probe",
    "linear_probe_transfer",
]
