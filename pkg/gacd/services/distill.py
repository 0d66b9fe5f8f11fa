"""
Guided Adversarial Contrastive Distillation

Training loop that transfers a robust teacher's representation into a
student by maximizing a teacher-reweighted contrastive likelihood over
feature-scattered positives and memory-bank negatives.

Per iteration:
    1. x+ <- label-free feature-scattering perturbation of x (student features)
    2. t+ <- teacher embedding of x+, w <- teacher confidence in the true class
    3. s+ <- student embedding of x+
    4. negatives <- k bank entries of other-class instances, per anchor
    5. SGD step on the batch mean of -w * (log h(t+, s+) + sum log(1 - h(t+, s-)))
    6. bank slots of the batch <- momentum update with s+
"""

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch
from torch import nn
from tqdm import tqdm

from gacd.attacks.feature_scatter import feature_scatter_positive
from gacd.attacks.pgd import AttackStats
from gacd.config.settings import DistillConfig, ScatterConfig, Settings, config_hash
from gacd.core.contrastive import (
    CriticConfig,
    SamplePairSet,
    SaturationCounter,
    mi_lower_bound,
    nce_log_likelihood,
)
from gacd.core.embeddings import ProjectionHead, teacher_weight
from gacd.core.memory_bank import MemoryBank, bank_init
from gacd.models.networks import FeatureClassifier, build_model
from gacd.models.schemas import EpochMetrics
from gacd.services.checkpoints import classifier_payload, load_checkpoint, save_checkpoint
from gacd.services.datasets import DatasetSplits, make_loader
from gacd.services.evaluation import evaluate
from gacd.utils.exceptions import (
    ClassCountMismatchError,
    ConfigValidationError,
    FrozenBackboneError,
    GACDException,
    NonFiniteError,
)
from gacd.utils.logger import logger
from gacd.utils.runtime import (
    atomic_write_text,
    evaluating,
    make_generator,
    parameter_fingerprint,
    resolve_device,
    seed_everything,
)

CHECKPOINT_NAME = "distill.pt"
METRICS_NAME = "distill_metrics.jsonl"


def freeze(model: nn.Module) -> nn.Module:
    """Inference mode with gradients disabled for every parameter."""
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model


@dataclass
class BatchObjective:
    """Everything computed for one batch before the parameter update."""

    loss: torch.Tensor
    log_likelihood: torch.Tensor
    weights: torch.Tensor
    teacher_embedding: torch.Tensor
    student_embedding: torch.Tensor
    negatives: torch.Tensor
    negative_index: torch.Tensor


@dataclass
class EpochAccumulator:
    """Running sums over one epoch."""

    objective: float = 0.0
    log_likelihood: float = 0.0
    weight: float = 0.0
    count: int = 0
    saturation: SaturationCounter = field(default_factory=SaturationCounter)

    def add(self, batch: BatchObjective) -> None:
        n = batch.weights.numel()
        self.objective += float(batch.loss.detach()) * n
        self.log_likelihood += float(batch.log_likelihood.detach().sum())
        self.weight += float(batch.weights.sum())
        self.count += n

    def summary(self, epoch: int, k: int, wall_time: float) -> EpochMetrics:
        count = max(self.count, 1)
        mean_ll = min(self.log_likelihood / count, 0.0)
        return EpochMetrics(
            epoch=epoch,
            objective=max(self.objective / count, 0.0),
            log_likelihood=mean_ll,
            mi_lower_bound=mi_lower_bound(mean_ll, k),
            mean_weight=min(max(self.weight / count, 0.0), 1.0),
            saturated=self.saturation.count,
            wall_time=wall_time,
        )


class ContrastiveDistiller:
    """
    Owns the mutable distillation state: student, both projection heads,
    memory bank, optimizer, schedule and random generator.

    The teacher is frozen on construction and never updated.
    """

    def __init__(
        self,
        teacher: FeatureClassifier,
        student: FeatureClassifier,
        train_labels: torch.Tensor,
        distill: DistillConfig,
        critic: CriticConfig,
        scatter: ScatterConfig,
        feat_dim: int = 128,
        seed: int = 0,
        device: torch.device | str = "cpu",
    ):
        self.device = torch.device(device)
        self.teacher = freeze(teacher.to(self.device))
        self.student = student.to(self.device)
        self.cfg = distill
        self.critic = critic
        self.scatter = scatter

        if critic.num_negatives >= critic.num_samples:
            raise ConfigValidationError(
                f"num_negatives ({critic.num_negatives}) must be smaller than the "
                f"training set ({critic.num_samples})"
            )

        self.teacher_head = ProjectionHead(teacher.feature_dim, feat_dim).to(self.device)
        self.student_head = ProjectionHead(student.feature_dim, feat_dim).to(self.device)
        self.bank = bank_init(
            critic.num_samples, feat_dim, train_labels, seed=seed, momentum=distill.bank_momentum
        ).to(self.device)
        self.generator = make_generator(seed + 1)

        trainable = (
            list(self.student.parameters())
            + list(self.teacher_head.parameters())
            + list(self.student_head.parameters())
        )
        self.optimizer = torch.optim.SGD(
            trainable,
            lr=distill.lr,
            momentum=distill.momentum,
            weight_decay=distill.weight_decay,
        )
        self.scheduler = torch.optim.lr_scheduler.MultiStepLR(
            self.optimizer, milestones=distill.lr_milestones, gamma=distill.lr_gamma
        )

        self.global_step = 0
        self.saturation = SaturationCounter()
        self.attack_stats = AttackStats()

    @classmethod
    def from_settings(
        cls,
        teacher: FeatureClassifier,
        student: FeatureClassifier,
        train_labels: torch.Tensor,
        settings: Settings,
    ) -> "ContrastiveDistiller":
        return cls(
            teacher,
            student,
            train_labels,
            distill=settings.distill,
            critic=CriticConfig.from_settings(settings.critic, len(train_labels)),
            scatter=settings.scatter,
            feat_dim=settings.embedding.feat_dim,
            seed=settings.app.seed,
            device=resolve_device(settings.app.device),
        )

    def positives(self, x: torch.Tensor) -> torch.Tensor:
        """Feature-scattered x+, crafted on the student in inference mode."""
        with evaluating(self.student):
            return feature_scatter_positive(
                self.student.features,
                x,
                self.scatter.budget,
                self.scatter.ot,
                generator=self.generator,
                stats=self.attack_stats,
            )

    def contrast(
        self,
        x_pos: torch.Tensor,
        y: torch.Tensor,
        counter: Optional[SaturationCounter] = None,
    ) -> BatchObjective:
        """Reweighted contrastive objective on already-perturbed inputs."""
        with torch.no_grad():
            t_feats, t_logits = self.teacher.forward_with_features(x_pos)

        if self.cfg.reweight:
            weights = teacher_weight(t_logits, y)
        else:
            weights = torch.ones(y.shape[0], dtype=t_logits.dtype, device=t_logits.device)

        t_emb = self.teacher_head(t_feats)
        s_emb = self.student_head(self.student.features(x_pos))
        negatives, negative_index = self.bank.sample_negatives(
            y, self.critic.num_negatives, generator=self.generator
        )

        pairs = SamplePairSet(anchor=t_emb, positive=s_emb, negatives=negatives, weight=weights)
        log_likelihood = nce_log_likelihood(pairs, self.critic, counter)
        loss = -(pairs.weight * log_likelihood).mean()
        return BatchObjective(
            loss=loss,
            log_likelihood=log_likelihood,
            weights=weights.detach(),
            teacher_embedding=t_emb,
            student_embedding=s_emb,
            negatives=negatives,
            negative_index=negative_index,
        )

    def objective(
        self, x: torch.Tensor, y: torch.Tensor, counter: Optional[SaturationCounter] = None
    ) -> BatchObjective:
        x = x.to(self.device)
        y = y.to(self.device)
        return self.contrast(self.positives(x), y, counter)

    def step(self, x: torch.Tensor, y: torch.Tensor, index: torch.Tensor) -> BatchObjective:
        """
        One distillation update.

        A step that fails before the update leaves the generator, the student
        buffers and the bank exactly as they were.

        Raises:
            NonFiniteError: If the batch loss is not finite.
            DegenerateProjectionError: If a head maps features to zero.
        """
        if x.shape[0] == 0:
            raise ConfigValidationError("distillation batch is empty")

        generator_state = self.generator.get_state()
        buffers = {name: buf.clone() for name, buf in self.student.named_buffers()}
        counter = SaturationCounter()

        self.student.train()
        try:
            batch = self.objective(x, y, counter)
            if not torch.isfinite(batch.loss):
                raise NonFiniteError("distillation loss", {"step": self.global_step})
        except GACDException:
            self.generator.set_state(generator_state)
            with torch.no_grad():
                for name, buf in self.student.named_buffers():
                    buf.copy_(buffers[name])
            raise

        self.optimizer.zero_grad(set_to_none=True)
        batch.loss.backward()
        self.optimizer.step()
        self.bank.update(index, batch.student_embedding.detach())

        self.saturation.count += counter.count
        self.global_step += 1
        logger.debug(f"step {self.global_step}: -l={batch.loss.item():.4f}")
        return batch

    def state_dict(self) -> Dict[str, Any]:
        return {
            "student": self.student.state_dict(),
            "teacher_head": self.teacher_head.state_dict(),
            "student_head": self.student_head.state_dict(),
            "bank": self.bank.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
            "generator": self.generator.get_state(),
            "global_step": self.global_step,
            "saturated": self.saturation.count,
        }

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.student.load_state_dict(state["student"])
        self.teacher_head.load_state_dict(state["teacher_head"])
        self.student_head.load_state_dict(state["student_head"])
        self.bank.load_state_dict(state["bank"])
        self.optimizer.load_state_dict(state["optimizer"])
        self.scheduler.load_state_dict(state["scheduler"])
        self.generator.set_state(state["generator"])
        self.global_step = state["global_step"]
        self.saturation.count = state["saturated"]


@dataclass
class DistillResult:
    student: FeatureClassifier
    history: List[EpochMetrics]
    checkpoint: Path
    metrics_path: Path


# Settings that shape the training trajectory; the epoch count may grow on resume.
RESUME_FIELDS: Dict[str, Any] = {
    "app": {"seed"},
    "dataset": {"name", "train_size", "test_size", "classes"},
    "models": {"student_arch"},
    "embedding": True,
    "critic": True,
    "distill": {"batch_size", "lr", "momentum", "weight_decay", "lr_milestones", "lr_gamma",
                "bank_momentum", "reweight"},
    "scatter": True,
}


def resume_hash(settings: Settings) -> str:
    canonical = json.dumps(settings.model_dump(mode="json", include=RESUME_FIELDS), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _write_history(path: Path, history: List[EpochMetrics]) -> None:
    atomic_write_text(path, "".join(m.model_dump_json() + "\n" for m in history))


def _save(
    path: Path,
    distiller: ContrastiveDistiller,
    epoch: int,
    history: List[EpochMetrics],
    teacher_fingerprint: str,
    settings: Settings,
) -> None:
    payload = classifier_payload(
        distiller.student,
        epoch=epoch,
        history=[m.model_dump() for m in history],
        teacher_fingerprint=teacher_fingerprint,
        feat_dim=settings.embedding.feat_dim,
        distill_state=distiller.state_dict(),
        resume_hash=resume_hash(settings),
    )
    save_checkpoint(path, "distill", payload, config_hash(settings))


def run_distillation(
    settings: Settings,
    splits: DatasetSplits,
    teacher: FeatureClassifier,
    resume: bool = False,
    output_dir: Optional[Path] = None,
) -> DistillResult:
    """
    Distill ``teacher`` into a freshly initialized student over ``splits.train``.

    Writes ``distill_metrics.jsonl`` and the resumable ``distill.pt``
    checkpoint after every epoch.

    Raises:
        ClassCountMismatchError: If the teacher and dataset disagree on K.
        ConfigValidationError: If k is not smaller than the training set, or a
            resumed checkpoint came from another setup or teacher.
        FrozenBackboneError: If the teacher changed during training.
    """
    if teacher.num_classes != splits.num_classes:
        raise ClassCountMismatchError(teacher.num_classes, splits.num_classes, "teacher")

    output_dir = Path(output_dir or settings.output.path)
    checkpoint_path = output_dir / CHECKPOINT_NAME
    metrics_path = output_dir / METRICS_NAME
    device = resolve_device(settings.app.device)

    report = evaluate(teacher, splits.test, None, model_id="teacher", dataset_id=splits.name)
    logger.info(f"Teacher natural accuracy: {report.natural_accuracy:.2f}%")

    seed_everything(settings.app.seed, settings.app.deterministic)
    student = build_model(settings.models.student_arch, splits.num_classes)
    distiller = ContrastiveDistiller.from_settings(teacher, student, splits.train.labels, settings)
    teacher_fingerprint = parameter_fingerprint(distiller.teacher)

    start_epoch = 0
    history: List[EpochMetrics] = []
    trajectory_hash = resume_hash(settings)
    if resume and checkpoint_path.exists():
        document = load_checkpoint(checkpoint_path, kind="distill")
        if document.get("resume_hash") != trajectory_hash:
            raise ConfigValidationError(
                f"{checkpoint_path} was written under a different distillation setup",
                {"checkpoint": document.get("resume_hash"), "current": trajectory_hash},
            )
        if document["teacher_fingerprint"] != teacher_fingerprint:
            raise ConfigValidationError(
                f"{checkpoint_path} was distilled from a different teacher",
                {"checkpoint": document["teacher_fingerprint"], "current": teacher_fingerprint},
            )
        distiller.load_state_dict(document["distill_state"])
        start_epoch = document["epoch"]
        history = [EpochMetrics.model_validate(m) for m in document["history"]]
        logger.info(f"Resuming distillation from epoch {start_epoch}")

    cfg = settings.distill
    logger.info(
        f"Distilling {teacher.arch} -> {student.arch}: {cfg.epochs} epochs, "
        f"k={distiller.critic.num_negatives}, T={distiller.critic.temperature}, "
        f"reweight={cfg.reweight}"
    )

    for epoch in range(start_epoch, cfg.epochs):
        started = time.perf_counter()
        loader = make_loader(
            splits.train,
            cfg.batch_size,
            shuffle=True,
            seed=settings.app.seed + epoch,
            num_workers=settings.dataset.num_workers,
        )
        totals = EpochAccumulator()
        saturated_before = distiller.saturation.count

        for x, y, index in tqdm(
            loader, desc=f"distill {epoch + 1}/{cfg.epochs}", disable=not settings.app.progress, leave=False
        ):
            batch = distiller.step(x, y, index)
            totals.add(batch)

        distiller.scheduler.step()
        totals.saturation.count = distiller.saturation.count - saturated_before
        metrics = totals.summary(epoch, distiller.critic.num_negatives, time.perf_counter() - started)
        history.append(metrics)
        if metrics.saturated:
            logger.warning(f"epoch {epoch}: {metrics.saturated} critic logit(s) clamped")
        logger.info(
            f"epoch {epoch}: -l={metrics.objective:.4f} "
            f"MI>={metrics.mi_lower_bound:.4f} w={metrics.mean_weight:.3f}"
        )

        _write_history(metrics_path, history)
        _save(checkpoint_path, distiller, epoch + 1, history, teacher_fingerprint, settings)

    if start_epoch >= cfg.epochs:
        _write_history(metrics_path, history)
        _save(checkpoint_path, distiller, cfg.epochs, history, teacher_fingerprint, settings)

    after = parameter_fingerprint(distiller.teacher)
    if after != teacher_fingerprint:
        raise FrozenBackboneError(teacher_fingerprint, after, what="teacher")
    if distiller.attack_stats.nonfinite:
        logger.warning(
            f"{distiller.attack_stats.nonfinite} positive(s) fell back to clean inputs"
        )

    return DistillResult(
        student=distiller.student,
        history=history,
        checkpoint=checkpoint_path,
        metrics_path=metrics_path,
    )


__all__ = [
    "BatchObjective",
    "ContrastiveDistiller",
    "DistillResult",
    "freeze",
    "resume_hash",
    "run_distillation",
]
