"""
Checkpoint Persistence

Versioned ``torch.save`` payloads written atomically. Two kinds exist:
``classifier`` (a trained FeatureClassifier) and ``distill`` (full
distillation state, resumable).
"""

import io
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch

from gacd.models.networks import FeatureClassifier, build_model
from gacd.utils.exceptions import CheckpointError
from gacd.utils.logger import logger
from gacd.utils.runtime import atomic_write_bytes

FORMAT_VERSION = 1
KINDS = ("classifier", "distill")


def save_checkpoint(
    path: Union[str, Path], kind: str, payload: Dict[str, Any], config_hash: str
) -> Path:
    """Serialize ``payload`` with format metadata, then rename into place."""
    if kind not in KINDS:
        raise CheckpointError(str(path), f"unknown checkpoint kind '{kind}'")

    document = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config_hash": config_hash,
        "saved_at": datetime.now(timezone.utc).isoformat(),
        **payload,
    }
    buffer = io.BytesIO()
    torch.save(document, buffer)
    atomic_write_bytes(path, buffer.getvalue())
    logger.debug(f"Saved {kind} checkpoint to {path}")
    return Path(path)


def load_checkpoint(path: Union[str, Path], kind: Optional[str] = None) -> Dict[str, Any]:
    """
    Load and validate a checkpoint document.

    Raises:
        CheckpointError: If the file is missing, unreadable, of another format
            version, or not of the requested kind.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(str(path), "file not found")
    try:
        document = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(str(path), f"unreadable ({e})") from e

    if not isinstance(document, dict) or document.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(str(path), "unsupported checkpoint format")
    if kind is not None and document.get("kind") != kind:
        raise CheckpointError(str(path), f"expected kind '{kind}', found '{document.get('kind')}'")
    return document


def classifier_payload(model: FeatureClassifier, **extra: Any) -> Dict[str, Any]:
    return {
        "arch": model.arch,
        "num_classes": model.num_classes,
        "model": model.state_dict(),
        **extra,
    }


def save_classifier(
    path: Union[str, Path], model: FeatureClassifier, config_hash: str, **extra: Any
) -> Path:
    return save_checkpoint(path, "classifier", classifier_payload(model, **extra), config_hash)


def load_classifier(path: Union[str, Path]) -> FeatureClassifier:
    """Rebuild a classifier from a ``classifier`` or ``distill`` checkpoint."""
    document = load_checkpoint(path)
    model = build_model(document["arch"], document["num_classes"])
    try:
        model.load_state_dict(document["model"])
    except (KeyError, RuntimeError) as e:
        raise CheckpointError(str(path), f"state does not match architecture ({e})") from e
    return model


__all__ = [
    "FORMAT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "classifier_payload",
    "save_classifier",
    "load_classifier",
]
