"""Tests for Pydantic result schemas."""

from uuid import UUID

import pytest
from pydantic import ValidationError

from gacd import __version__
from gacd.models.schemas import EpochMetrics, EvalReport, ResultRecord, Stage


class TestEvalReport:
    """Test EvalReport schema."""

    def test_valid_report(self):
        """Test valid report."""
        report = EvalReport(
            model_id="student",
            dataset_id="cifar10/test",
            num_classes=10,
            num_samples=10000,
            natural_accuracy=81.5,
            adversarial_accuracy=50.2,
            attack="PGD-20 Linf eps=8/255 alpha=2.0/255 rs",
        )
        assert report.attack_failures == 0
        assert report.adversarial_accuracy == pytest.approx(50.2)

    def test_natural_only_report(self):
        """Test natural only report."""
        report = EvalReport(
            model_id="m", dataset_id="d", num_classes=2, num_samples=1, natural_accuracy=100.0
        )
        assert report.adversarial_accuracy is None

    def test_adversarial_cannot_exceed_natural(self):
        """Test adversarial cannot exceed natural."""
        with pytest.raises(ValidationError) as exc_info:
            EvalReport(
                model_id="m",
                dataset_id="d",
                num_classes=2,
                num_samples=10,
                natural_accuracy=40.0,
                adversarial_accuracy=60.0,
            )
        assert "exceeds natural accuracy" in str(exc_info.value)

    def test_equal_accuracies_allowed(self):
        """Test equal accuracies allowed."""
        report = EvalReport(
            model_id="m",
            dataset_id="d",
            num_classes=2,
            num_samples=10,
            natural_accuracy=0.0,
            adversarial_accuracy=0.0,
        )
        assert report.natural_accuracy == report.adversarial_accuracy

    @pytest.mark.parametrize(
        "field,value",
        [("natural_accuracy", 100.1), ("natural_accuracy", -1.0), ("num_classes", 1), ("num_samples", 0)],
    )
    def test_out_of_range(self, field, value):
        """Test out of range."""
        data = {
            "model_id": "m",
            "dataset_id": "d",
            "num_classes": 2,
            "num_samples": 10,
            "natural_accuracy": 50.0,
        }
        data[field] = value
        with pytest.raises(ValidationError):
            EvalReport(**data)


class TestEpochMetrics:
    """Test EpochMetrics schema."""

    def test_valid_metrics(self):
        """Test valid metrics."""
        metrics = EpochMetrics(
            epoch=3,
            objective=12.5,
            log_likelihood=-14.0,
            mi_lower_bound=-4.3,
            mean_weight=0.8,
            saturated=0,
            wall_time=2.0,
        )
        assert metrics.model_dump()["epoch"] == 3

    @pytest.mark.parametrize(
        "field,value",
        [("objective", -0.1), ("log_likelihood", 0.5), ("mean_weight", 1.5), ("epoch", -1)],
    )
    def test_sign_constraints(self, field, value):
        """Test sign constraints."""
        data = {
            "epoch": 0,
            "objective": 1.0,
            "log_likelihood": -1.0,
            "mi_lower_bound": 0.0,
            "mean_weight": 0.5,
            "wall_time": 0.0,
        }
        data[field] = value
        with pytest.raises(ValidationError):
            EpochMetrics(**data)


class TestResultRecord:
    """Test ResultRecord schema."""

    def test_defaults(self):
        """Test defaults."""
        record = ResultRecord(config_hash="abc", stage=Stage.EVAL)
        assert isinstance(record.run_id, UUID)
        assert record.metrics == {}
        assert record.finished_at is None
        assert record.code_version == __version__
        assert record.started_at.tzinfo is not None

    def test_unique_run_ids(self):
        """Test unique run ids."""
        first = ResultRecord(config_hash="abc", stage="distill")
        second = ResultRecord(config_hash="abc", stage="distill")
        assert first.run_id != second.run_id
        assert first.stage is Stage.DISTILL

    def test_json_round_trip(self):
        """Test JSON round trip."""
        record = ResultRecord(config_hash="abc", stage=Stage.SWEEP, metrics={"k": 16, "T": 0.07})
        restored = ResultRecord.model_validate_json(record.model_dump_json())
        assert restored == record

    def test_invalid_stage(self):
        """Test invalid stage."""
        with pytest.raises(ValidationError):
            ResultRecord(config_hash="abc", stage="deploy")


class TestStage:
    """Test Stage enum."""

    def test_values(self):
        """Test values."""
        assert Stage.TEACHER.value == "teacher"
        assert Stage.ANALYZE.value == "analyze"
        assert len(Stage) == 8

    def test_is_str(self):
        """Test is str."""
        assert isinstance(Stage.EVAL, str)
