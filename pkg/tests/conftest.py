"""Test configuration for pytest."""

import sys
from pathlib import Path

import pytest
import torch

# Add project root to Python path
project_root = Path(__file__).parent.parent

if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from gacd.config.settings import Settings  # noqa: E402
from gacd.models.networks import FeatureClassifier, build_model  # noqa: E402
from gacd.services.datasets import (  # noqa: E402
    DatasetSplits,
    IndexedTensorDataset,
    make_synthetic,
)


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch):
    """Keep developer environment variables out of every test."""
    monkeypatch.delenv("GACD_CONFIG", raising=False)
    monkeypatch.delenv("GACD_DATA_ROOT", raising=False)


@pytest.fixture(scope="session")
def tiny_splits() -> DatasetSplits:
    """Two-class synthetic splits small enough for per-test training."""
    train = IndexedTensorDataset(*make_synthetic(per_class=32, seed=0))
    test = IndexedTensorDataset(*make_synthetic(per_class=16, seed=1))
    return DatasetSplits(
        name="synthetic",
        train=train,
        test=test,
        num_classes=2,
        class_names=["band0", "band1"],
    )


@pytest.fixture
def small_model() -> FeatureClassifier:
    torch.manual_seed(0)
    return build_model("small_cnn", 2)


@pytest.fixture
def tiny_settings(tmp_path) -> Settings:
    """Settings for a seconds-long run on the synthetic fixture."""
    return Settings.model_validate(
        {
            "app": {"progress": False, "seed": 0},
            "dataset": {"name": "synthetic", "root": str(tmp_path / "data")},
            "models": {
                "teacher_checkpoint": str(tmp_path / "teacher.pt"),
                "teacher_arch": "small_cnn",
                "student_arch": "small_cnn",
            },
            "embedding": {"feat_dim": 16},
            "critic": {"num_negatives": 8, "temperature": 0.1},
            "distill": {"epochs": 1, "batch_size": 32, "lr": 0.05, "lr_milestones": []},
            "scatter": {"budget": {"steps": 2, "random_start": False}, "ot": {"iterations": 10}},
            "attack": {"steps": 3},
            "teacher_training": {"epochs": 1, "batch_size": 32, "budget": {"steps": 2}},
            "finetune": {"epochs": 1, "batch_size": 32, "budget": {"steps": 2}},
            "probe": {"epochs": 5, "batch_size": 32, "lr": 0.05},
            "transfer": {"name": "synthetic-shifted", "budget": {"steps": 2}},
            "analysis": {
                "export_groups": [
                    {"true_class": 0, "count": 4},
                    {"true_class": 1, "count": 4},
                    {"true_class": 1, "count": 4, "adversarial": True, "target_class": 0},
                ]
            },
            "sweep": {"num_negatives": [4, 8], "temperatures": [0.1]},
            "output": {"dir": str(tmp_path / "run")},
        }
    )


class BandBackbone(torch.nn.Module):
    """Mean brightness of the top and bottom halves: a hand-built perfect synthetic feature."""

    feature_dim = 2

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        half = x.shape[-2] // 2
        return torch.stack([x[:, :, :half].mean(dim=(1, 2, 3)), x[:, :, half:].mean(dim=(1, 2, 3))], dim=1)


@pytest.fixture
def band_classifier() -> FeatureClassifier:
    """Classifier that separates the synthetic classes with a margin of 0.25."""
    model = FeatureClassifier(BandBackbone(), 2, arch="band")
    with torch.no_grad():
        model.head.weight.copy_(10 * torch.eye(2))
        model.head.bias.zero_()
    return model.eval()


@pytest.fixture
def teacher_model() -> FeatureClassifier:
    torch.manual_seed(1)
    return build_model("small_cnn", 2).eval()
