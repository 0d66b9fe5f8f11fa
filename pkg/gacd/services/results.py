"""
Result Log and Report Tables

Append-only JSON-lines log of ``ResultRecord`` entries and the Nat./Adv.
table rendered across runs.
"""

import os
from pathlib import Path
from typing import Iterable, List, Optional, Union

from pydantic import BaseModel
from rich import box
from rich.console import Console
from rich.table import Table

from gacd.models.schemas import ResultRecord, Stage
from gacd.utils.exceptions import ReportMismatchError
from gacd.utils.logger import logger


class ResultLog:
    """Line-delimited, append-only record store."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def append(self, record: BaseModel) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = record.model_dump_json() + "\n"
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(line)
            handle.flush()
            os.fsync(handle.fileno())

    def read(self) -> List[ResultRecord]:
        if not self.path.exists():
            return []
        with self.path.open(encoding="utf-8") as handle:
            return [ResultRecord.model_validate_json(line) for line in handle if line.strip()]


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_report(records: Iterable[ResultRecord], title: str = "Classification accuracy (%)") -> str:
    """
    Render evaluation records as a Method | Nat. | Adv. table.

    One row per model id; the latest record for a model wins.

    Raises:
        ReportMismatchError: If there are no records or they disagree on class count.
    """
    evals = [r for r in records if r.stage in (Stage.EVAL, Stage.TRANSFER)]
    if not evals:
        raise ReportMismatchError("no eval/transfer records to report")

    class_counts = {r.metrics.get("num_classes") for r in evals}
    if len(class_counts) > 1:
        raise ReportMismatchError(
            "records mix different class counts", {"num_classes": sorted(map(str, class_counts))}
        )

    rows = {}
    for record in evals:
        rows[record.metrics.get("model_id", str(record.run_id))] = record

    table = Table(title=title, box=box.SIMPLE)
    table.add_column("Method")
    table.add_column("Dataset")
    table.add_column("Nat.", justify="right")
    table.add_column("Adv.", justify="right")
    for model_id, record in rows.items():
        table.add_row(
            model_id,
            str(record.metrics.get("dataset_id", "")),
            _fmt(record.metrics.get("natural_accuracy")),
            _fmt(record.metrics.get("adversarial_accuracy")),
        )

    console = Console(width=100, record=True, force_terminal=False, color_system=None)
    with console.capture() as capture:
        console.print(table)
    logger.debug(f"Rendered report over {len(rows)} model(s)")
    return capture.get()


__all__ = ["ResultLog", "render_report"]
