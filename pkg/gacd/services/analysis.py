"""
Distilled Feature Analysis

Teacher-student logit correlation differences and penultimate feature dumps
for external 2-D embedding tools.
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from gacd.attacks.pgd import (
    AttackStats,
    cross_entropy_sum,
    pgd_attack,
    targeted_cross_entropy_sum,
)
from gacd.config.settings import AttackBudget, ExportGroup, Settings, config_hash
from gacd.models.networks import FeatureClassifier
from gacd.services.datasets import DatasetSplits, IndexedTensorDataset, make_loader
from gacd.utils.exceptions import ConfigValidationError, ShapeMismatchError
from gacd.utils.logger import logger
from gacd.utils.runtime import atomic_write_text, evaluating, make_generator

ZERO_VARIANCE_EPS = 1e-12


@dataclass
class CorrelationMatrix:
    """K x K Pearson correlations between logit channels over a split."""

    values: np.ndarray
    zero_variance: List[int] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]


def correlation_from_logits(logits: torch.Tensor | np.ndarray) -> CorrelationMatrix:
    """
    Pearson correlation of every pair of columns of an ``(N, K)`` logit matrix.

    Pairs involving a zero-variance channel are defined as 0 and the channel
    is flagged. The result is symmetric with unit diagonal.
    """
    logits = np.asarray(torch.as_tensor(logits).detach().cpu(), dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeMismatchError("logits", "(N, K) with K >= 2", logits.shape)
    if logits.shape[0] == 0:
        raise ConfigValidationError("correlation split is empty")

    centered = logits - logits.mean(axis=0, keepdims=True)
    std = np.sqrt((centered**2).sum(axis=0))
    degenerate = std <= ZERO_VARIANCE_EPS
    safe = np.where(degenerate, 1.0, std)

    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)

    flagged = np.flatnonzero(degenerate).tolist()
    if flagged:
        logger.warning(f"Zero-variance logit channel(s) {flagged}: correlations set to 0")
    return CorrelationMatrix(values=corr, zero_variance=flagged)


def collect_logits(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    budget: Optional[AttackBudget] = None,
    batch_size: int = 256,
    seed: int = 0,
    device: torch.device | str = "cpu",
) -> torch.Tensor:
    """Logits over the split, on PGD-attacked inputs when a budget is given."""
    generator = make_generator(seed)
    chunks = []
    with evaluating(model):
        for x, y, _ in make_loader(dataset, batch_size, shuffle=False):
            x, y = x.to(device), y.to(device)
            if budget is not None:
                x = pgd_attack(model, x, y, budget, generator=generator)
            with torch.no_grad():
                chunks.append(model(x).cpu())
    return torch.cat(chunks)


def logits_correlation(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    budget: Optional[AttackBudget] = None,
    seed: int = 0,
    device: torch.device | str = "cpu",
) -> CorrelationMatrix:
    if len(dataset) == 0:
        raise ConfigValidationError("correlation split is empty")
    return correlation_from_logits(collect_logits(model, dataset, budget, seed=seed, device=device))


def correlation_difference(
    teacher: CorrelationMatrix, student: CorrelationMatrix
) -> Tuple[np.ndarray, float]:
    """Elementwise ``|teacher - student|`` and its mean over off-diagonal entries."""
    if teacher.values.shape != student.values.shape:
        raise ShapeMismatchError("correlation matrices", teacher.values.shape, student.values.shape)
    diff = np.abs(teacher.values - student.values)
    off_diagonal = ~np.eye(diff.shape[0], dtype=bool)
    return diff, float(diff[off_diagonal].mean())


def _hash_comment(hash_hex: str) -> str:
    return f"# config_hash={hash_hex}\n"


def save_correlation_grid(
    path: str | Path, matrix: np.ndarray, class_names: Sequence[str], hash_hex: str
) -> Path:
    """Dense CSV grid with a class-label header row and column."""
    if len(class_names) != matrix.shape[0]:
        raise ShapeMismatchError("class names", matrix.shape[0], len(class_names))
    buffer = io.StringIO()
    buffer.write(_hash_comment(hash_hex))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["class", *class_names])
    for name, row in zip(class_names, matrix):
        writer.writerow([name, *(f"{v:.10f}" for v in row)])
    return atomic_write_text(path, buffer.getvalue())


@dataclass
class ExportSummary:
    path: Path
    rows: int
    omitted: int
    feature_dim: int


def _select_group(
    dataset: IndexedTensorDataset, group: ExportGroup, generator: torch.Generator
) -> torch.Tensor:
    eligible = (dataset.labels == group.true_class).nonzero(as_tuple=True)[0]
    if eligible.numel() < group.count:
        logger.warning(
            f"Class {group.true_class} has {eligible.numel()} sample(s), {group.count} requested"
        )
    order = torch.randperm(eligible.numel(), generator=generator)
    return eligible[order[: group.count]].sort().values


def export_features(
    model: FeatureClassifier,
    dataset: IndexedTensorDataset,
    groups: Sequence[ExportGroup],
    budget: AttackBudget,
    path: str | Path,
    hash_hex: str,
    num_classes: Optional[int] = None,
    seed: int = 0,
    device: torch.device | str = "cpu",
) -> ExportSummary:
    """
    Write penultimate features of sampled natural and adversarial images.

    Format: a ``# config_hash=<hex>`` line, then a CSV header
    ``sample_id,true_class,variant,f0,...,f{D-1}`` and one row per sample.
    Adversarial rows use targeted PGD toward ``target_class`` (untargeted
    when unset). Rows whose attack or features are non-finite are omitted.
    """
    num_classes = num_classes or model.num_classes
    for group in groups:
        for cls in (group.true_class, group.target_class):
            if cls is not None and cls >= num_classes:
                raise ConfigValidationError(f"export class {cls} not in [0, {num_classes})")

    buffer = io.StringIO()
    buffer.write(_hash_comment(hash_hex))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["sample_id", "true_class", "variant", *(f"f{i}" for i in range(model.feature_dim))])

    rows = omitted = 0
    with evaluating(model):
        for position, group in enumerate(groups):
            generator = make_generator(seed + position)
            index = _select_group(dataset, group, generator)
            if index.numel() == 0:
                continue
            x = dataset.images[index].to(device)
            y = dataset.labels[index].to(device)

            failed = torch.zeros(index.numel(), dtype=torch.bool, device=x.device)
            if group.adversarial:
                stats = AttackStats()
                if group.target_class is None:
                    x = pgd_attack(model, x, y, budget, cross_entropy_sum, generator, stats)
                else:
                    target = torch.full_like(y, group.target_class)
                    x = pgd_attack(model, x, target, budget, targeted_cross_entropy_sum, generator, stats)
                if stats.last_failed is not None:
                    failed |= stats.last_failed

            with torch.no_grad():
                feats = model.features(x).cpu()
            failed |= ~torch.isfinite(feats).all(dim=1).to(failed.device)

            variant = "adversarial" if group.adversarial else "natural"
            for sample_id, label, row, bad in zip(index.tolist(), y.tolist(), feats, failed.tolist()):
                if bad:
                    omitted += 1
                    continue
                writer.writerow([sample_id, label, variant, *(f"{v:.8g}" for v in row.tolist())])
                rows += 1

    if omitted:
        logger.warning(f"Omitted {omitted} export row(s) after attack failure")
    path = atomic_write_text(path, buffer.getvalue())
    logger.info(f"Exported {rows} feature row(s) to {path}")
    return ExportSummary(path=path, rows=rows, omitted=omitted, feature_dim=model.feature_dim)


def run_analysis(
    settings: Settings,
    splits: DatasetSplits,
    teacher: FeatureClassifier,
    students: Dict[str, FeatureClassifier],
    output_dir: Optional[Path] = None,
) -> Dict[str, Dict[str, float]]:
    """
    Correlation-difference summaries of each student against the teacher on
    natural (and optionally adversarial) test inputs, plus feature dumps.
    """
    output_dir = Path(output_dir or settings.output.path) / "analysis"
    hash_hex = config_hash(settings)
    seed = settings.app.seed
    variants: Dict[str, Optional[AttackBudget]] = {"natural": None}
    if settings.analysis.adversarial_correlation:
        variants["adversarial"] = settings.attack

    teacher_corr = {
        name: logits_correlation(teacher, splits.test, budget, seed=seed)
        for name, budget in variants.items()
    }
    for name, corr in teacher_corr.items():
        save_correlation_grid(output_dir / f"teacher_{name}_corr.csv", corr.values, splits.class_names, hash_hex)

    summaries: Dict[str, Dict[str, float]] = {}
    for label, student in students.items():
        summaries[label] = {}
        for name, budget in variants.items():
            student_corr = logits_correlation(student, splits.test, budget, seed=seed)
            diff, summary = correlation_difference(teacher_corr[name], student_corr)
            save_correlation_grid(output_dir / f"{label}_{name}_diff.csv", diff, splits.class_names, hash_hex)
            summaries[label][name] = summary
            logger.info(f"{label} ({name}): mean |corr diff| {summary:.4f}")

        export = export_features(
            student,
            splits.test,
            settings.analysis.export_groups,
            settings.attack,
            output_dir / f"{label}_features.csv",
            hash_hex,
            num_classes=splits.num_classes,
            seed=seed,
        )
        summaries[label]["exported_rows"] = export.rows
        summaries[label]["omitted_rows"] = export.omitted

    return summaries


__all__ = [
    "CorrelationMatrix",
    "ExportSummary",
    "correlation_from_logits",
    "collect_logits",
    "logits_correlation",
    "correlation_difference",
    "save_correlation_grid",
    "export_features",
    "run_analysis",
]
