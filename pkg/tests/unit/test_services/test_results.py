"""Tests for the result log and report rendering."""

import pytest

from gacd.models.schemas import ResultRecord, Stage
from gacd.services.results import ResultLog, render_report
from gacd.utils.exceptions import ReportMismatchError


def eval_record(model_id, nat, adv, num_classes=10, stage=Stage.EVAL):
    return ResultRecord(
        config_hash="h",
        stage=stage,
        metrics={
            "model_id": model_id,
            "dataset_id": "cifar10/test",
            "num_classes": num_classes,
            "natural_accuracy": nat,
            "adversarial_accuracy": adv,
        },
    )


class TestResultLog:
    """Test the append-only log."""

    def test_append_and_read(self, tmp_path):
        """Test append and read."""
        log = ResultLog(tmp_path / "nested" / "results.jsonl")
        first = eval_record("a", 80.0, 40.0)
        second = ResultRecord(config_hash="h", stage=Stage.DISTILL, metrics={"epochs": 1})
        log.append(first)
        log.append(second)
        assert log.read() == [first, second]

    def test_missing_file_reads_empty(self, tmp_path):
        """Test missing file reads empty."""
        assert ResultLog(tmp_path / "none.jsonl").read() == []

    def test_append_never_rewrites(self, tmp_path):
        """Test append never rewrites."""
        path = tmp_path / "results.jsonl"
        log = ResultLog(path)
        log.append(eval_record("a", 80.0, 40.0))
        head = path.read_text()
        log.append(eval_record("b", 70.0, 30.0))
        assert path.read_text().startswith(head)


class TestRenderReport:
    """Test report rendering."""

    def test_table_contents(self):
        """Test table contents."""
        text = render_report([eval_record("gacd", 81.234, 50.5), eval_record("kd", 85.0, None)])
        assert "Method" in text and "Nat." in text and "Adv." in text
        assert "gacd" in text and "81.23" in text and "50.50" in text
        assert "85.00" in text and "-" in text

    def test_latest_record_wins(self):
        """Test latest record wins."""
        text = render_report([eval_record("m", 10.0, 5.0), eval_record("m", 20.0, 6.0)])
        assert "20.00" in text
        assert "10.00" not in text

    def test_non_eval_records_ignored(self):
        """Test non eval records ignored."""
        records = [
            ResultRecord(config_hash="h", stage=Stage.DISTILL, metrics={"model_id": "ignored"}),
            eval_record("m", 10.0, 5.0, stage=Stage.TRANSFER),
        ]
        text = render_report(records)
        assert "ignored" not in text

    def test_no_records(self):
        """Test no records."""
        with pytest.raises(ReportMismatchError):
            render_report([ResultRecord(config_hash="h", stage=Stage.DISTILL)])

    def test_mixed_class_counts(self):
        """Test mixed class counts."""
        with pytest.raises(ReportMismatchError) as exc_info:
            render_report([eval_record("a", 1.0, 0.0, 10), eval_record("b", 1.0, 0.0, 100)])
        assert exc_info.value.exit_code == 2
