"""CSV and JSON output for runs, plus an independent verifier over written files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .core import INVARIANT_TOL, IterationRecord, RunResult


def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def header(p: int, lead: list[str] | None = None) -> list[str]:
    cols = ["t", "objective_error"] + [f"violation_{r + 1}" for r in range(p)]
    cols += ["queue_sum_norm", "drift", "drift_bound", "lemma1_slack_min"]
    return (lead or []) + cols


def record_row(rec: IterationRecord) -> list[str]:
    return (
        [str(rec.t), _fmt(rec.objective_error)]
        + [_fmt(v) for v in rec.violation]
        + [_fmt(rec.queue_sum_norm), _fmt(rec.drift), _fmt(rec.drift_bound), _fmt(rec.lemma1_slack_min)]
    )


def write_runs_csv(path, runs: list[tuple[list[str], RunResult]], lead: list[str] | None = None) -> Path:
    """Write one or more runs to a single CSV.

    ``runs`` pairs each result with the values of the ``lead`` columns
    (for example the buffer constant of a sweep or the algorithm name).
    Floats are written with ``repr`` so the file round-trips exactly and
    identical runs give identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p = len(runs[0][1].records[0].violation)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header(p, lead))
        for prefix, result in runs:
            for rec in result.records:
                w.writerow(list(prefix) + record_row(rec))
    return path


def write_run_csv(path, result: RunResult) -> Path:
    return write_runs_csv(path, [([], result)])


def read_csv(path) -> list[dict]:
    """Rows as dicts; numeric cells become floats (``t`` an int), empty cells None."""
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, cell in raw.items():
                if key in ("algorithm",):
                    row[key] = cell
                elif cell == "":
                    row[key] = None
                elif key == "t":
                    row[key] = int(cell)
                else:
                    row[key] = float(cell)
            rows.append(row)
    return rows


@dataclass
class VerifyReport:
    rows: int
    lemma1_failures: list
    drift_failures: list

    @property
    def ok(self) -> bool:
        return not self.lemma1_failures and not self.drift_failures

    def describe(self) -> str:
        lines = [f"{self.rows} rows checked"]
        for label, bad in (("cumulative-violation slack", self.lemma1_failures), ("drift bound", self.drift_failures)):
            if bad:
                shown = ", ".join(str(b) for b in bad[:5])
                lines.append(f"{label} broken on {len(bad)} rows (t = {shown}{' ...' if len(bad) > 5 else ''})")
            else:
                lines.append(f"{label}: ok")
        return "\n".join(lines)


def verify_csv(path, tol: float = INVARIANT_TOL) -> VerifyReport:
    """Re-check the per-row invariants from the file alone.

    Every row must satisfy ``lemma1_slack_min >= -tol`` and
    ``drift <= drift_bound + tol`` wherever those cells are filled.
    """
    rows = read_csv(path)
    lem, dri = [], []
    for row in rows:
        slack = row.get("lemma1_slack_min")
        if slack is not None and slack < -tol:
            lem.append(row["t"])
        drift, bound = row.get("drift"), row.get("drift_bound")
        if drift is not None and bound is not None and drift > bound + tol:
            dri.append(row["t"])
    return VerifyReport(rows=len(rows), lemma1_failures=lem, drift_failures=dri)


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
