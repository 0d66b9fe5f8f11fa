"""
Experiment Configuration Management

Declarative TOML configuration with environment substitution, dotted-path
overrides and a stable configuration hash.
"""

import hashlib
import json
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import toml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator, model_validator

DEFAULT_CONFIG_PATH = "config.toml"


class AppConfig(BaseModel):
    """Runtime and logging configuration"""

    name: str = "GACD"
    version: str = "0.1.0"
    log_level: str = "INFO"
    log_to_file: bool = False
    log_file_path: str = "logs/gacd.log"
    seed: int = 0
    deterministic: bool = False
    device: str = "cpu"
    progress: bool = True


class DatasetConfig(BaseModel):
    """Source dataset used for distillation, fine-tuning and evaluation"""

    name: str = "cifar10"
    root: str = "data"
    train_size: Optional[int] = Field(None, gt=0)
    test_size: Optional[int] = Field(None, gt=0)
    classes: Optional[List[int]] = None
    num_workers: int = Field(0, ge=0)


class ModelsConfig(BaseModel):
    """Teacher checkpoint and architecture ids"""

    teacher_checkpoint: str = "runs/default/teacher.pt"
    teacher_arch: str = "resnet18"
    student_arch: str = "resnet18"


class EmbeddingConfig(BaseModel):
    """Shared teacher/student embedding space"""

    feat_dim: int = Field(128, gt=0)


class CriticSettings(BaseModel):
    """Closed-form NCE critic"""

    temperature: float = Field(0.1, gt=0)
    num_negatives: int = Field(16384, ge=1)
    logit_clamp: float = Field(50.0, gt=0)


class AttackBudget(BaseModel):
    """L-infinity PGD budget in [0, 1] pixel units"""

    epsilon: float = Field(8 / 255, ge=0)
    steps: int = Field(20, ge=1)
    step_size: float = Field(2 / 255, ge=0)
    random_start: bool = True

    @model_validator(mode="after")
    def check_step_size(self) -> "AttackBudget":
        """Step size must lie in (0, epsilon] whenever the budget is nonzero."""
        if self.epsilon > 0 and not 0 < self.step_size <= self.epsilon:
            raise ValueError("step_size must satisfy 0 < step_size <= epsilon")
        if self.epsilon == 0 and self.step_size > 0:
            raise ValueError("step_size must be 0 when epsilon is 0")
        return self

    def describe(self) -> str:
        """Human-readable attack description used in reports."""
        return (
            f"PGD-{self.steps} Linf eps={self.epsilon * 255:.0f}/255 "
            f"alpha={self.step_size * 255:.1f}/255"
            f"{' rs' if self.random_start else ''}"
        )


class OTConfig(BaseModel):
    """Entropic optimal transport used as the feature distortion"""

    reg: float = Field(0.01, gt=0)
    iterations: int = Field(50, ge=1)


class ScatterConfig(BaseModel):
    """Label-free feature-scattering positive construction"""

    budget: AttackBudget = AttackBudget(steps=7, random_start=False)
    ot: OTConfig = OTConfig()


class OptimConfig(BaseModel):
    """SGD with momentum and a step-decay schedule"""

    epochs: int = Field(100, ge=0)
    batch_size: int = Field(128, gt=0)
    lr: float = Field(0.05, gt=0)
    momentum: float = Field(0.9, ge=0)
    weight_decay: float = Field(5e-4, ge=0)
    lr_milestones: List[int] = [60, 80]
    lr_gamma: float = Field(0.1, gt=0)


class DistillConfig(OptimConfig):
    """Contrastive distillation loop"""

    bank_momentum: float = Field(0.5, ge=0, lt=1)
    reweight: bool = True


class KDConfig(BaseModel):
    """Soft-label distillation baseline; shares the distill schedule"""

    temperature: float = Field(4.0, gt=0)
    alpha: float = Field(0.9, ge=0, le=1)


class AdversarialTrainingConfig(OptimConfig):
    """Madry-protocol adversarial training (teacher training and fine-tuning)"""

    budget: AttackBudget = AttackBudget(steps=7)


class ProbeConfig(BaseModel):
    """Linear probe on a frozen backbone"""

    epochs: int = Field(30, ge=0)
    batch_size: int = Field(256, gt=0)
    lr: float = Field(0.01, gt=0)
    weight_decay: float = Field(0.0, ge=0)


class TransferConfig(BaseModel):
    """Transfer dataset and its evaluation attack"""

    name: str = "stl10"
    root: str = "data"
    train_size: Optional[int] = Field(None, gt=0)
    test_size: Optional[int] = Field(None, gt=0)
    budget: AttackBudget = AttackBudget(steps=7)


class ExportGroup(BaseModel):
    """One block of rows in a feature dump"""

    true_class: int = Field(..., ge=0)
    count: int = Field(100, ge=0)
    adversarial: bool = False
    target_class: Optional[int] = Field(None, ge=0)


class AnalysisConfig(BaseModel):
    """Correlation analysis and feature export"""

    adversarial_correlation: bool = True
    export_groups: List[ExportGroup] = [
        ExportGroup(true_class=2, count=100),
        ExportGroup(true_class=9, count=100),
        ExportGroup(true_class=9, count=100, adversarial=True, target_class=2),
    ]
    compare_checkpoints: List[str] = []


class SweepConfig(BaseModel):
    """Hyper-parameter grids for the k/T sweep"""

    num_negatives: List[int] = [16, 64, 256, 1024, 4096, 16384]
    temperatures: List[float] = [0.02, 0.05, 0.07, 0.1, 0.2]

    @field_validator("num_negatives")
    @classmethod
    def check_negatives(cls, v: List[int]) -> List[int]:
        if any(k < 1 for k in v):
            raise ValueError("every k in the sweep must be >= 1")
        return v

    @field_validator("temperatures")
    @classmethod
    def check_temperatures(cls, v: List[float]) -> List[float]:
        if any(t <= 0 for t in v):
            raise ValueError("every temperature in the sweep must be > 0")
        return v


class OutputConfig(BaseModel):
    """Artifact locations"""

    dir: str = "runs/default"
    results_file: str = "results.jsonl"

    @property
    def path(self) -> Path:
        return Path(self.dir)

    @property
    def results_path(self) -> Path:
        return Path(self.dir) / self.results_file


class Settings(BaseModel):
    """Root experiment configuration"""

    app: AppConfig = AppConfig()
    dataset: DatasetConfig = DatasetConfig()
    models: ModelsConfig = ModelsConfig()
    embedding: EmbeddingConfig = EmbeddingConfig()
    critic: CriticSettings = CriticSettings()
    distill: DistillConfig = DistillConfig()
    scatter: ScatterConfig = ScatterConfig()
    attack: AttackBudget = AttackBudget()
    kd: KDConfig = KDConfig()
    teacher_training: AdversarialTrainingConfig = AdversarialTrainingConfig()
    finetune: AdversarialTrainingConfig = AdversarialTrainingConfig(
        epochs=10, lr=0.01, lr_milestones=[5, 8]
    )
    probe: ProbeConfig = ProbeConfig()
    transfer: TransferConfig = TransferConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()


def substitute_env_vars(config_str: str) -> str:
    """Substitute environment variables in config string"""
    pattern = r"\$([A-Z_][A-Z0-9_]*)"

    def replacer(match):
        var_name = match.group(1)
        return os.getenv(var_name, f"${var_name}")

    return re.sub(pattern, replacer, config_str)


def parse_override_value(raw: str) -> Any:
    """Parse an override value as a TOML scalar or array, else keep the string."""
    try:
        return toml.loads(f"value = {raw}")["value"]
    except toml.TomlDecodeError:
        return raw


def apply_overrides(config_data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply dotted-path overrides such as ``distill.epochs=3`` in place.

    Raises:
        ValueError: If an override is not of the form ``key.path=value``.
    """
    for override in overrides:
        if "=" not in override:
            raise ValueError(f"Override '{override}' must look like section.key=value")
        dotted, raw = override.split("=", 1)
        keys = [k for k in dotted.strip().split(".") if k]
        if not keys:
            raise ValueError(f"Override '{override}' has an empty key path")

        node = config_data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"Override '{override}' descends into a scalar")
        node[keys[-1]] = parse_override_value(raw.strip())
    return config_data


def load_config(
    path: Optional[str | Path] = None, overrides: Sequence[str] = ()
) -> Settings:
    """
    Load configuration from a TOML file.

    A missing default file yields the built-in defaults; a missing explicit
    path is an error.
    """
    load_dotenv()

    explicit = path is not None or "GACD_CONFIG" in os.environ
    config_path = Path(path or os.getenv("GACD_CONFIG", DEFAULT_CONFIG_PATH))

    config_data: Dict[str, Any] = {}
    if config_path.exists():
        config_str = substitute_env_vars(config_path.read_text())
        config_data = toml.loads(config_str)
    elif explicit:
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    apply_overrides(config_data, overrides)

    data_root = os.getenv("GACD_DATA_ROOT")
    if data_root:
        config_data.setdefault("dataset", {})["root"] = data_root
        config_data.setdefault("transfer", {})["root"] = data_root

    return Settings.model_validate(config_data)


def config_hash(settings: Settings) -> str:
    """SHA-256 of the canonical JSON form of the settings."""
    canonical = json.dumps(settings.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()

