"""Append-only metrics stream and tidy CSV export.

Each metrics row is one self-describing JSON object per line, written with a
single write+flush so a killed run leaves a parseable file (readers skip a
truncated final line). Export merges per-seed metrics files into one CSV with
a fixed column set, sorted so re-export is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .errors import DataError

EXPORT_COLUMNS = (
    "method",
    "seed",
    "env_steps",
    "success_rate",
    "mean_return",
    "disc_loss",
    "reward_mean",
    "reg_loss",
)


class MetricsWriter:
    def __init__(self, path):
        self.path = Path(path)
        self._f = open(self.path, "w", encoding="ascii")

    def write_row(self, row):
        self._f.write(json.dumps(row, separators=(",", ":")) + "\n")
        self._f.flush()

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def read_rows(path):
    """Parse a metrics file; returns (rows, skipped_count)."""
    rows, skipped = [], 0
    try:
        with open(path, encoding="ascii") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError:
                    skipped += 1
    except OSError as e:
        raise DataError(f"cannot read metrics file {path}: {e}") from e
    return rows, skipped


def export_csv(metrics_dir, out_path):
    """Merge every metrics.jsonl under `metrics_dir` into one tidy CSV.

    Returns (row_count, skipped_count). Missing fields become empty cells;
    rows are sorted by (method, seed, env_steps) for idempotent output.
    """
    metrics_dir = Path(metrics_dir)
    files = sorted(metrics_dir.rglob("metrics.jsonl"))
    if not files:
        raise DataError(f"no metrics.jsonl files found under {metrics_dir}")
    rows, skipped = [], 0
    for path in files:
        got, bad = read_rows(path)
        rows.extend(got)
        skipped += bad
    rows.sort(key=lambda r: (str(r.get("method", "")), r.get("seed", -1),
                             r.get("env_steps", -1), r.get("round", -1)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EXPORT_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row.get(col)) for col in EXPORT_COLUMNS])
    Path(out_path).write_text(buf.getvalue(), encoding="ascii")
    return len(rows), skipped


def _cell(value):
    if value is None:
        return ""
    return value
