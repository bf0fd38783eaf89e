"""Artifact writers: RFC-4180 CSV, gnuplot data files and summary.json.

Floats are written with 17 significant digits so that a CSV round-trips the
exact doubles and identical runs produce byte-identical files.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import RunSummary

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a header row plus data rows with CRLF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return path


def write_dat(path: Path, x: Sequence[Any], y: Sequence[Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for a, b in zip(x, y):
            f.write(f"{format_value(a)} {format_value(b)}\n")
    return path


def write_plot_script(path: Path, series: Sequence[tuple[str, str]], logx: bool = True, logy: bool = True) -> Path:
    """A gnuplot script overlaying each (dat file name, title) pair."""
    path = Path(path)
    scales = " ".join(axis for axis, on in (("x", logx), ("y", logy)) if on)
    lines = ["set terminal pngcairo size 900,600", f"set output '{path.stem}.png'", "set grid"]
    if scales:
        lines.append(f"set logscale {scales}")
    plots = ", ".join(f"'{name}' using 1:2 with lines title '{title}'" for name, title in series)
    lines.append(f"plot {plots}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_summary(output_dir: Path, summary: RunSummary) -> Path:
    path = Path(output_dir) / "summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary.model_dump(mode="json"), indent=2) + "\n")
    logger.info(f"Summary written to {path}")
    return path


def summary_schema() -> dict[str, Any]:
    return RunSummary.model_json_schema()
