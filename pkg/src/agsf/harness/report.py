"""CSV and JSON result reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Sequence

from agsf.harness.experiment import ResultRecord

COLUMNS = ("algorithm", "params", "mse_mean", "mse_std", "lpe_mean", "lpe_std", "runtime_mean", "diverged_frac")
_PER_SEED = ("mse", "lpe", "runtime", "diverged", "degenerate_steps", "clamped_steps")


def format_number(value: float) -> str:
    """Six significant digits; scientific notation from 1e6 upwards."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if abs(value) >= 1e6:
        return f"{value:.5e}"
    return f"{value:.6g}"


def _summary(rec: ResultRecord) -> dict:
    return {c: getattr(rec, c) for c in COLUMNS}


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def emit_report(records: Sequence[ResultRecord], fmt: str, path) -> Path:
    """Write ``records`` as CSV (summary columns) or JSON (summary plus per-seed lists)."""
    path = Path(path)
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(COLUMNS)
                for rec in records:
                    row = _summary(rec)
                    writer.writerow([row["algorithm"], row["params"]] + [format_number(row[c]) for c in COLUMNS[2:]])
        elif fmt == "json":
            out = []
            for rec in records:
                entry = {k: _json_value(v) for k, v in _summary(rec).items()}
                for k in _PER_SEED:
                    entry[k] = [_json_value(v) for v in getattr(rec, k)]
                out.append(entry)
            path.write_text(json.dumps(out, indent=2) + "\n")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise OSError(f"could not write report to {path}: {exc}") from exc
    return path


def load_report(path) -> list[ResultRecord]:
    """Read a JSON report back into records."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"could not read report {path}: {exc}") from exc

    def floats(xs):
        return [float("nan") if x is None else float(x) for x in xs]

    records = []
    for entry in data:
        records.append(
            ResultRecord(
                algorithm=entry["algorithm"],
                params=entry["params"],
                mse=floats(entry["mse"]),
                lpe=floats(entry["lpe"]),
                runtime=floats(entry["runtime"]),
                diverged=[bool(x) for x in entry["diverged"]],
                degenerate_steps=[int(x) for x in entry.get("degenerate_steps", [])],
                clamped_steps=[int(x) for x in entry.get("clamped_steps", [])],
            )
        )
    return records
