"""CSV traces and JSON reports written by the experiment harness."""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List

from pydantic import BaseModel

from ..models.responses import NormTrace

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "step",
    "time",
    "energy_norm",
    "h_norm",
    "v_norm",
    "min_singular_value_of_gram",
    "effective_rank",
    "fp_iters",
]


def format_value(value: Any) -> Any:
    """Floats with 17 significant digits, empty cell for missing values."""
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return value


def save_rows_csv(path: Path, rows: Iterable[Dict[str, Any]], columns: List[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_value(row.get(key)) for key in columns})
    logger.debug(f"Wrote {path}")
    return path


def write_trace_csv(path: Path, trace: NormTrace) -> Path:
    return save_rows_csv(path, (row.model_dump() for row in trace.rows), TRACE_COLUMNS)


def read_trace_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_json_report(path: Path, report: BaseModel | Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(report, BaseModel):
        text = report.model_dump_json(indent=2)
    else:
        text = json.dumps(report, indent=2, default=str)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path
