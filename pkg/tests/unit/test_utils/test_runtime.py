"""Tests for reproducibility and I/O helpers."""

import numpy as np
import pytest
import torch

from gacd.utils.runtime import (
    atomic_write_bytes,
    atomic_write_text,
    evaluating,
    make_generator,
    parameter_fingerprint,
    resolve_device,
    seed_everything,
)


class TestSeeding:
    """Test global and per-consumer seeding."""

    def test_seed_everything_repeats_draws(self):
        """Test seed everything repeats draws."""
        seed_everything(5)
        first = (torch.rand(3), np.random.rand(3))
        seed_everything(5)
        second = (torch.rand(3), np.random.rand(3))
        assert torch.equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])

    def test_make_generator(self):
        """Test make generator."""
        a = torch.rand(4, generator=make_generator(7))
        b = torch.rand(4, generator=make_generator(7))
        assert torch.equal(a, b)

    def test_unavailable_cuda_falls_back(self, mocker):
        """Test unavailable cuda falls back."""
        mocker.patch("torch.cuda.is_available", return_value=False)
        assert resolve_device("cuda:0") == torch.device("cpu")
        assert resolve_device("cpu") == torch.device("cpu")


class TestAtomicWrites:
    """Test atomic file replacement."""

    def test_write_and_replace(self, tmp_path):
        """Test write and replace."""
        path = tmp_path / "sub" / "out.txt"
        atomic_write_text(path, "first")
        atomic_write_text(path, "second")
        assert path.read_text() == "second"
        assert [p.name for p in path.parent.iterdir()] == ["out.txt"]

    def test_failed_write_keeps_previous(self, tmp_path, mocker):
        """Test failed write keeps previous."""
        path = tmp_path / "out.bin"
        atomic_write_bytes(path, b"old")
        mocker.patch("gacd.utils.runtime.os.replace", side_effect=OSError("disk full"))
        with pytest.raises(OSError):
            atomic_write_bytes(path, b"new")
        assert path.read_bytes() == b"old"
        assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]


class TestModuleHelpers:
    """Test fingerprints and mode switching."""

    def test_fingerprint_tracks_parameters(self, small_model):
        """Test fingerprint tracks parameters."""
        before = parameter_fingerprint(small_model)
        assert before == parameter_fingerprint(small_model)
        with torch.no_grad():
            small_model.head.bias.add_(1.0)
        assert parameter_fingerprint(small_model) != before

    def test_evaluating_restores_mode(self, small_model):
        """Test evaluating restores mode."""
        small_model.train()
        with evaluating(small_model) as model:
            assert not model.training
        assert small_model.training

        small_model.eval()
        with evaluating(small_model):
            pass
        assert not small_model.training
