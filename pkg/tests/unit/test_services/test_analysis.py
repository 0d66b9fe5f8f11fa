"""Tests for correlation analysis and feature export."""

import csv

import numpy as np
import pytest
import torch

from gacd.config.settings import AttackBudget, ExportGroup
from gacd.services.analysis import (
    CorrelationMatrix,
    collect_logits,
    correlation_difference,
    correlation_from_logits,
    export_features,
    logits_correlation,
    run_analysis,
    save_correlation_grid,
)
from gacd.services.datasets import IndexedTensorDataset
from gacd.utils.exceptions import ConfigValidationError, ShapeMismatchError


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.reader(lines[1:]))


class TestCorrelationFromLogits:
    """Test Pearson correlation of logit channels."""

    def test_matches_numpy(self):
        """Test matches numpy."""
        logits = np.random.default_rng(0).normal(size=(200, 6))
        corr = correlation_from_logits(logits)
        np.testing.assert_allclose(corr.values, np.corrcoef(logits, rowvar=False), atol=1e-12)
        assert corr.num_classes == 6
        assert corr.zero_variance == []

    def test_symmetric_with_unit_diagonal(self):
        """Test symmetric with unit diagonal."""
        logits = torch.randn(50, 4, generator=torch.Generator().manual_seed(1))
        values = correlation_from_logits(logits).values
        assert np.array_equal(values, values.T)
        assert np.array_equal(np.diag(values), np.ones(4))
        assert (np.abs(values) <= 1).all()

    def test_perfect_and_anti_correlation(self):
        """Test perfect and anti correlation."""
        base = np.linspace(-1, 1, 20)
        values = correlation_from_logits(np.stack([base, 3 * base + 1, -base], axis=1)).values
        assert values[0, 1] == pytest.approx(1.0)
        assert values[0, 2] == pytest.approx(-1.0)

    def test_zero_variance_channel(self):
        """Test zero variance channel."""
        logits = np.random.default_rng(2).normal(size=(30, 3))
        logits[:, 1] = 5.0
        corr = correlation_from_logits(logits)
        assert corr.zero_variance == [1]
        assert corr.values[1, 0] == 0.0 and corr.values[2, 1] == 0.0
        assert corr.values[1, 1] == 1.0

    def test_single_class_rejected(self):
        """Test single class rejected."""
        with pytest.raises(ShapeMismatchError):
            correlation_from_logits(np.zeros((10, 1)))

    def test_empty_rejected(self):
        """Test empty rejected."""
        with pytest.raises(ConfigValidationError):
            correlation_from_logits(np.zeros((0, 3)))


class TestCorrelationDifference:
    """Test off-diagonal correlation gaps."""

    def test_identical_matrices(self):
        """Test identical matrices."""
        corr = correlation_from_logits(np.random.default_rng(3).normal(size=(40, 5)))
        diff, summary = correlation_difference(corr, corr)
        assert not diff.any()
        assert summary == 0.0

    def test_off_diagonal_mean(self):
        """Test off diagonal mean."""
        a = CorrelationMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]))
        b = CorrelationMatrix(np.array([[1.0, -0.1], [-0.1, 1.0]]))
        diff, summary = correlation_difference(a, b)
        assert summary == pytest.approx(0.6)
        assert diff[0, 0] == 0.0

    def test_shape_mismatch(self):
        """Test shape mismatch."""
        with pytest.raises(ShapeMismatchError):
            correlation_difference(CorrelationMatrix(np.eye(2)), CorrelationMatrix(np.eye(3)))


class TestModelCorrelation:
    """Test logit correlation of a model."""

    def test_collect_logits_order(self, small_model, tiny_splits):
        """Test collect logits order."""
        logits = collect_logits(small_model, tiny_splits.test, batch_size=5)
        with torch.no_grad():
            expected = small_model.eval()(tiny_splits.test.images)
        assert torch.allclose(logits, expected, atol=1e-5)

    def test_adversarial_correlation(self, small_model, tiny_splits):
        """Test adversarial correlation."""
        corr = logits_correlation(small_model, tiny_splits.test, AttackBudget(steps=2))
        assert corr.values.shape == (2, 2)

    def test_empty_split(self, small_model):
        """Test empty split."""
        empty = IndexedTensorDataset(torch.empty(0, 3, 32, 32), torch.empty(0, dtype=torch.long))
        with pytest.raises(ConfigValidationError):
            logits_correlation(small_model, empty)


class TestCorrelationGrid:
    """Test the correlation heatmap figure."""

    def test_grid_layout(self, tmp_path):
        """Test grid layout."""
        path = save_correlation_grid(tmp_path / "grid.csv", np.eye(2), ["bird", "truck"], "abc")
        comment, rows = read_csv(path)
        assert comment == "# config_hash=abc"
        assert rows[0] == ["class", "bird", "truck"]
        assert rows[1][0] == "bird"
        assert float(rows[1][1]) == 1.0 and float(rows[1][2]) == 0.0

    def test_name_count_checked(self, tmp_path):
        """Test name count checked."""
        with pytest.raises(ShapeMismatchError):
            save_correlation_grid(tmp_path / "grid.csv", np.eye(2), ["only"], "abc")


class TestExportFeatures:
    """Test feature dumps."""

    def groups(self):
        return [
            ExportGroup(true_class=0, count=4),
            ExportGroup(true_class=1, count=4, adversarial=True, target_class=0),
        ]

    def test_layout(self, small_model, tiny_splits, tmp_path):
        """Test layout."""
        summary = export_features(
            small_model, tiny_splits.test, self.groups(), AttackBudget(steps=2), tmp_path / "f.csv", "h"
        )
        comment, rows = read_csv(summary.path)
        assert comment == "# config_hash=h"
        header, body = rows[0], rows[1:]
        assert header[:3] == ["sample_id", "true_class", "variant"]
        assert header[3:] == [f"f{i}" for i in range(small_model.feature_dim)]
        assert summary.rows == len(body) == 8
        assert summary.omitted == 0

        natural = [r for r in body if r[2] == "natural"]
        adversarial = [r for r in body if r[2] == "adversarial"]
        assert len(natural) == len(adversarial) == 4
        labels = tiny_splits.test.labels
        assert all(labels[int(r[0])] == 0 and r[1] == "0" for r in natural)
        assert all(labels[int(r[0])] == 1 and r[1] == "1" for r in adversarial)

    def test_deterministic(self, small_model, tiny_splits, tmp_path):
        """Test deterministic."""
        args = (small_model, tiny_splits.test, self.groups(), AttackBudget(steps=2))
        first = export_features(*args, tmp_path / "a.csv", "h", seed=3)
        second = export_features(*args, tmp_path / "b.csv", "h", seed=3)
        assert first.path.read_text() == second.path.read_text()

    def test_short_class_exports_what_exists(self, small_model, tiny_splits, tmp_path):
        """Test short class exports what exists."""
        available = int((tiny_splits.test.labels == 0).sum())
        summary = export_features(
            small_model,
            tiny_splits.test,
            [ExportGroup(true_class=0, count=available + 10)],
            AttackBudget(steps=1),
            tmp_path / "f.csv",
            "h",
        )
        assert summary.rows == available

    def test_failed_attack_rows_omitted(self, small_model, tiny_splits, tmp_path, mocker):
        """Test failed attack rows omitted."""
        def fail_first(model, x, y, budget, loss_fn, generator, stats):
            stats.last_failed = torch.zeros(x.shape[0], dtype=torch.bool)
            stats.last_failed[0] = True
            return x

        mocker.patch("gacd.services.analysis.pgd_attack", side_effect=fail_first)
        summary = export_features(
            small_model, tiny_splits.test, self.groups(), AttackBudget(steps=1), tmp_path / "f.csv", "h"
        )
        assert summary.omitted == 1
        assert summary.rows == 7

    @pytest.mark.parametrize(
        "group", [ExportGroup(true_class=5), ExportGroup(true_class=0, adversarial=True, target_class=3)]
    )
    def test_class_out_of_range(self, small_model, tiny_splits, tmp_path, group):
        """Test class out of range."""
        with pytest.raises(ConfigValidationError):
            export_features(small_model, tiny_splits.test, [group], AttackBudget(), tmp_path / "f.csv", "h")


def test_run_analysis(tiny_settings, tiny_splits, teacher_model, small_model, tmp_path):
    """Test run analysis."""
    summaries = run_analysis(tiny_settings, tiny_splits, teacher_model, {"student": small_model}, tmp_path)
    out = tmp_path / "analysis"
    for name in (
        "teacher_natural_corr.csv",
        "teacher_adversarial_corr.csv",
        "student_natural_diff.csv",
        "student_adversarial_diff.csv",
        "student_features.csv",
    ):
        assert (out / name).exists()
    assert set(summaries["student"]) == {"natural", "adversarial", "exported_rows", "omitted_rows"}
    assert summaries["student"]["exported_rows"] == 12
    assert 0.0 <= summaries["student"]["natural"] <= 2.0
