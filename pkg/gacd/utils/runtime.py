"""
Reproducibility and I/O Helpers

Global seeding, deterministic kernels, atomic artifact writes and parameter
fingerprints.
"""

import hashlib
import os
import random
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

import numpy as np
import torch
from torch import nn

from gacd.utils.logger import logger


def seed_everything(seed: int, deterministic: bool = False) -> None:
    """Seed Python, NumPy and torch; optionally force deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)

    if deterministic:
        os.environ.setdefault("CUBLAS_WORKSPACE_CONFIG", ":4096:8")
        torch.use_deterministic_algorithms(True)
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False
        logger.info("Deterministic kernels enabled")

    logger.debug(f"Seeded all generators with {seed}")


def make_generator(seed: int, device: Union[str, torch.device] = "cpu") -> torch.Generator:
    """A fresh torch generator seeded for one consumer."""
    generator = torch.Generator(device=device)
    generator.manual_seed(seed)
    return generator


def resolve_device(name: str) -> torch.device:
    """Map a configured device name onto an available torch device."""
    if name.startswith("cuda") and not torch.cuda.is_available():
        logger.warning(f"Device '{name}' unavailable, falling back to CPU")
        return torch.device("cpu")
    return torch.device(name)


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> Path:
    """Write to a temporary sibling then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def parameter_fingerprint(module: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    digest = hashlib.sha256()
    for name, tensor in module.state_dict().items():
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


@contextmanager
def evaluating(module: nn.Module) -> Iterator[nn.Module]:
    """Temporarily switch a module to inference mode, restoring its previous mode."""
    was_training = module.training
    module.eval()
    try:
        yield module
    finally:
        module.train(was_training)


__all__ = [
    "seed_everything",
    "make_generator",
    "resolve_device",
    "atomic_write_bytes",
    "atomic_write_text",
    "parameter_fingerprint",
    "evaluating",
]
