"""
Backbones and Classifiers

Every network is a ``FeatureClassifier``: a backbone producing penultimate
features followed by a linear classification head, so the distillation code can
address ``features()`` and ``forward()`` separately.
"""

from typing import Callable, Dict, Tuple

import torch
from torch import nn
from torchvision.models import resnet18

from gacd.utils.exceptions import ConfigValidationError


class SmallCNN(nn.Module):
    """Four-conv network for desk-scale runs on 32x32 inputs."""

    def __init__(self, width: int = 32, feature_dim: int = 128):
        super().__init__()
        self.feature_dim = feature_dim
        self.body = nn.Sequential(
            nn.Conv2d(3, width, 3, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1),
            nn.BatchNorm2d(width),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(width, 2 * width, 3, padding=1),
            nn.BatchNorm2d(2 * width),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * width, 2 * width, 3, padding=1),
            nn.BatchNorm2d(2 * width),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(2 * width, feature_dim),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class CifarResNet18(nn.Module):
    """torchvision ResNet-18 with a 3x3 stem and no max-pool, returning pooled features."""

    def __init__(self):
        super().__init__()
        net = resnet18(weights=None)
        net.conv1 = nn.Conv2d(3, 64, kernel_size=3, stride=1, padding=1, bias=False)
        net.maxpool = nn.Identity()
        self.feature_dim = net.fc.in_features
        net.fc = nn.Identity()
        self.net = net

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class FeatureClassifier(nn.Module):
    """Backbone plus linear head."""

    def __init__(self, backbone: nn.Module, num_classes: int, arch: str = "custom"):
        super().__init__()
        self.arch = arch
        self.num_classes = num_classes
        self.backbone = backbone
        self.feature_dim: int = backbone.feature_dim
        self.head = nn.Linear(self.feature_dim, num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Penultimate-layer representation."""
        return self.backbone(x)

    def forward_with_features(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        feats = self.backbone(x)
        return feats, self.head(feats)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.backbone(x))

    def reset_head(self, generator: torch.Generator | None = None) -> None:
        """Re-initialize the classification head (fresh head for fine-tuning/probing)."""
        bound = 1.0 / self.feature_dim**0.5
        with torch.no_grad():
            self.head.weight.uniform_(-bound, bound, generator=generator)
            self.head.bias.uniform_(-bound, bound, generator=generator)


BACKBONES: Dict[str, Callable[[], nn.Module]] = {
    "small_cnn": SmallCNN,
    "resnet18": CifarResNet18,
}


def build_model(arch: str, num_classes: int) -> FeatureClassifier:
    """Instantiate a classifier by architecture id."""
    if arch not in BACKBONES:
        raise ConfigValidationError(
            f"unknown architecture '{arch}'", {"supported": sorted(BACKBONES)}
        )
    if num_classes < 2:
        raise ConfigValidationError(f"num_classes must be >= 2, got {num_classes}")
    return FeatureClassifier(BACKBONES[arch](), num_classes, arch=arch)


__all__ = ["SmallCNN", "CifarResNet18", "FeatureClassifier", "BACKBONES", "build_model"]
