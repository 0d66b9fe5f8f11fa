"""
Experiment Runner

Command-line entry point binding dataset ingestion, training, evaluation
and reporting. Every command loads one TOML configuration (plus dotted
``--set`` overrides), validates it and its inputs before writing anything,
and appends a ``ResultRecord`` to the run's result log.
"""

import functools
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated, Any, Callable, Dict, List, Optional

import typer

from gacd.config.settings import Settings, config_hash, load_config
from gacd.models.networks import FeatureClassifier
from gacd.models.schemas import ResultRecord, Stage
from gacd.services.analysis import run_analysis
from gacd.services.checkpoints import load_checkpoint, load_classifier, save_classifier
from gacd.services.datasets import DatasetSplits, ingest_dataset
from gacd.services.distill import run_distillation
from gacd.services.evaluation import evaluate, fit_linear_probe, linear_probe_transfer
from gacd.services.kd import run_kd_baseline
from gacd.services.results import ResultLog, render_report
from gacd.services.training import adversarial_finetune, train_teacher
from gacd.utils.exceptions import ConfigValidationError, GACDException
from gacd.utils.logger import logger, setup_logger
from gacd.utils.runtime import resolve_device, seed_everything

app = typer.Typer(
    name="gacd",
    help="Guided adversarial contrastive distillation experiments.",
    no_args_is_help=True,
    add_completion=False,
)

ConfigOption = Annotated[
    Optional[Path], typer.Option("--config", "-c", help="TOML configuration file.")
]
SetOption = Annotated[
    Optional[List[str]],
    typer.Option("--set", "-s", help="Dotted override, e.g. distill.epochs=3 (repeatable)."),
]
CheckpointOption = Annotated[Path, typer.Option("--checkpoint", help="Checkpoint to load.")]
LabelOption = Annotated[
    Optional[str], typer.Option("--label", help="Model id shown in reports.")
]


@dataclass
class RunContext:
    """Validated settings and bookkeeping shared by one command."""

    settings: Settings
    config_hash: str
    results: ResultLog
    started_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    @property
    def output_dir(self) -> Path:
        return self.settings.output.path

    def record(self, stage: Stage, metrics: Dict[str, Any]) -> ResultRecord:
        record = ResultRecord(
            config_hash=self.config_hash,
            stage=stage,
            metrics=metrics,
            started_at=self.started_at,
            finished_at=datetime.now(timezone.utc),
        )
        self.results.append(record)
        logger.info(f"Recorded {stage.value} result {record.run_id}")
        return record


def prepare(config: Optional[Path], overrides: Optional[List[str]]) -> RunContext:
    """
    Load and validate configuration, configure logging and seed everything.

    Raises:
        ConfigValidationError: On a missing file, malformed override or
            invalid value.
    """
    try:
        settings = load_config(config, overrides or [])
    except FileNotFoundError as e:
        raise ConfigValidationError(str(e)) from e
    except ValueError as e:
        raise ConfigValidationError(str(e)) from e

    setup_logger(settings.app)
    seed_everything(settings.app.seed, settings.app.deterministic)
    hash_hex = config_hash(settings)
    logger.info(f"Configuration {hash_hex[:12]} loaded")
    return RunContext(
        settings=settings,
        config_hash=hash_hex,
        results=ResultLog(settings.output.results_path),
    )


def handle_errors(func: Callable) -> Callable:
    """Translate application errors into a logged message and exit status."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except GACDException as e:
            logger.error(f"[{e.error_code}] {e.message}")
            if e.details:
                logger.debug(f"details: {e.details}")
            raise typer.Exit(code=e.exit_code) from e

    return wrapper


def load_source(settings: Settings) -> DatasetSplits:
    ds = settings.dataset
    return ingest_dataset(ds.name, ds.root, ds.train_size, ds.test_size, ds.classes)


def load_transfer(settings: Settings) -> DatasetSplits:
    tr = settings.transfer
    return ingest_dataset(tr.name, tr.root, tr.train_size, tr.test_size)


def as_classifier(
    checkpoint: Path, splits: DatasetSplits, ctx: RunContext
) -> tuple[FeatureClassifier, str]:
    """
    A ready-to-evaluate classifier from any checkpoint.

    Distillation checkpoints carry no trained head, so a clean linear probe is
    fitted on the source training split first.
    """
    document = load_checkpoint(checkpoint)
    model = load_classifier(checkpoint)
    if document["kind"] != "distill":
        return model, "classifier"
    settings = ctx.settings
    probe = fit_linear_probe(
        model,
        splits.train,
        splits.num_classes,
        settings.probe,
        seed=settings.app.seed,
        device=resolve_device(settings.app.device),
    )
    return probe, "linear-probe"


@app.command("train-teacher")
@handle_errors
def train_teacher_command(config: ConfigOption = None, overrides: SetOption = None) -> None:
    """Adversarially train a teacher and save it to models.teacher_checkpoint."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    splits = load_source(settings)

    teacher = train_teacher(settings, splits)
    path = save_classifier(
        settings.models.teacher_checkpoint, teacher, ctx.config_hash, input_size=splits.train.image_size
    )
    report = evaluate(
        teacher,
        splits.test,
        settings.attack,
        model_id="teacher",
        dataset_id=splits.name,
        num_classes=splits.num_classes,
        seed=settings.app.seed,
        device=resolve_device(settings.app.device),
        progress=settings.app.progress,
    )
    ctx.record(Stage.TEACHER, {**report.model_dump(), "checkpoint": str(path)})


@app.command("distill")
@handle_errors
def distill_command(
    config: ConfigOption = None,
    overrides: SetOption = None,
    resume: Annotated[bool, typer.Option("--resume", help="Continue from the last checkpoint.")] = False,
) -> None:
    """Contrastively distill the teacher into a fresh student."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    splits = load_source(settings)
    teacher = load_classifier(settings.models.teacher_checkpoint)

    result = run_distillation(settings, splits, teacher, resume=resume)
    metrics: Dict[str, Any] = {"checkpoint": str(result.checkpoint), "epochs": len(result.history)}
    if result.history:
        metrics.update(result.history[-1].model_dump())
    ctx.record(Stage.DISTILL, metrics)


@app.command("kd-baseline")
@handle_errors
def kd_baseline_command(config: ConfigOption = None, overrides: SetOption = None) -> None:
    """Train a soft-label distillation baseline student."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    splits = load_source(settings)
    teacher = load_classifier(settings.models.teacher_checkpoint)

    student = run_kd_baseline(settings, splits, teacher)
    path = save_classifier(
        ctx.output_dir / "kd.pt", student, ctx.config_hash, input_size=splits.train.image_size
    )
    ctx.record(Stage.KD, {"checkpoint": str(path), "epochs": settings.distill.epochs})


@app.command("finetune")
@handle_errors
def finetune_command(
    config: ConfigOption = None,
    overrides: SetOption = None,
    checkpoint: Annotated[Optional[Path], typer.Option("--checkpoint", help="Distilled student.")] = None,
    output: Annotated[Optional[Path], typer.Option("--output", help="Fine-tuned checkpoint path.")] = None,
) -> None:
    """Full-network adversarial fine-tuning of a distilled student."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    checkpoint = checkpoint or ctx.output_dir / "distill.pt"
    splits = load_source(settings)
    student = load_classifier(checkpoint)

    tuned = adversarial_finetune(
        student,
        splits,
        settings.finetune,
        seed=settings.app.seed,
        device=resolve_device(settings.app.device),
        progress=settings.app.progress,
    )
    path = save_classifier(
        output or ctx.output_dir / "finetune.pt", tuned, ctx.config_hash, input_size=splits.train.image_size
    )
    ctx.record(
        Stage.FINETUNE,
        {"checkpoint": str(path), "source": str(checkpoint), "epochs": settings.finetune.epochs},
    )


@app.command("eval")
@handle_errors
def eval_command(
    checkpoint: CheckpointOption,
    config: ConfigOption = None,
    overrides: SetOption = None,
    label: LabelOption = None,
) -> None:
    """Natural and PGD accuracy on the source test split."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    splits = load_source(settings)
    model, protocol = as_classifier(checkpoint, splits, ctx)

    report = evaluate(
        model,
        splits.test,
        settings.attack,
        model_id=label or checkpoint.stem,
        dataset_id=splits.name,
        num_classes=splits.num_classes,
        seed=settings.app.seed,
        device=resolve_device(settings.app.device),
        progress=settings.app.progress,
    )
    ctx.record(Stage.EVAL, {**report.model_dump(), "checkpoint": str(checkpoint), "protocol": protocol})


@app.command("transfer")
@handle_errors
def transfer_command(
    checkpoint: CheckpointOption,
    config: ConfigOption = None,
    overrides: SetOption = None,
    label: LabelOption = None,
) -> None:
    """Linear-probe transfer of a frozen backbone to the transfer dataset."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    document = load_checkpoint(checkpoint)
    model = load_classifier(checkpoint)
    splits = load_transfer(settings)

    report = linear_probe_transfer(
        model,
        splits,
        settings.probe,
        settings.transfer.budget,
        input_size=document.get("input_size", 32),
        model_id=label or checkpoint.stem,
        seed=settings.app.seed,
        device=resolve_device(settings.app.device),
        progress=settings.app.progress,
    )
    ctx.record(Stage.TRANSFER, {**report.model_dump(), "checkpoint": str(checkpoint)})


@app.command("analyze")
@handle_errors
def analyze_command(
    checkpoint: Annotated[
        Optional[List[Path]], typer.Option("--checkpoint", help="Student checkpoint (repeatable).")
    ] = None,
    config: ConfigOption = None,
    overrides: SetOption = None,
) -> None:
    """Teacher-student correlation differences and feature dumps."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    paths = [*(checkpoint or []), *map(Path, settings.analysis.compare_checkpoints)]
    if not paths:
        raise ConfigValidationError("analyze needs at least one --checkpoint")

    splits = load_source(settings)
    teacher = load_classifier(settings.models.teacher_checkpoint)
    students = {path.stem: as_classifier(path, splits, ctx)[0] for path in paths}

    summaries = run_analysis(settings, splits, teacher, students)
    ctx.record(Stage.ANALYZE, {"summaries": summaries, "checkpoints": [str(p) for p in paths]})


@app.command("report")
@handle_errors
def report_command(
    config: ConfigOption = None,
    overrides: SetOption = None,
    results: Annotated[Optional[Path], typer.Option("--results", help="Result log to read.")] = None,
) -> None:
    """Render the Nat./Adv. table over every eval record in the result log."""
    ctx = prepare(config, overrides)
    records = ResultLog(results or ctx.settings.output.results_path).read()
    typer.echo(render_report(records))


@app.command("sweep")
@handle_errors
def sweep_command(config: ConfigOption = None, overrides: SetOption = None) -> None:
    """Distill and linearly evaluate over the configured k x T grid."""
    ctx = prepare(config, overrides)
    settings = ctx.settings
    splits = load_source(settings)
    teacher = load_classifier(settings.models.teacher_checkpoint)
    num_samples = len(splits.train)

    for k in settings.sweep.num_negatives:
        if k >= num_samples:
            logger.warning(f"Skipping k={k}: training set has only {num_samples} samples")
            continue
        for temperature in settings.sweep.temperatures:
            point = settings.model_copy(deep=True)
            point.critic.num_negatives = k
            point.critic.temperature = temperature
            point_dir = ctx.output_dir / "sweep" / f"k{k}_T{temperature:g}"

            result = run_distillation(point, splits, teacher, output_dir=point_dir)
            report = linear_probe_transfer(
                result.student,
                splits,
                settings.probe,
                settings.attack,
                model_id=f"k={k} T={temperature:g}",
                seed=settings.app.seed,
                device=resolve_device(settings.app.device),
            )
            metrics: Dict[str, Any] = {
                "num_negatives": k,
                "temperature": temperature,
                "config_hash": config_hash(point),
                **report.model_dump(),
            }
            if result.history:
                metrics["mi_lower_bound"] = result.history[-1].mi_lower_bound
            ctx.record(Stage.SWEEP, metrics)


def main() -> None:
    app()


__all__ = ["app", "main", "prepare", "RunContext"]
