"""Review file parsing and deterministic report output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .model import DatasetError, FittedValues, Params, ReviewDataset, validate_dataset

SIG_DIGITS = 12


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    return "json" if path.suffix.lower() == ".json" else "csv"


def _number(raw, what: str) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DatasetError(f"non-numeric {what}: {raw!r}") from None
    if not math.isfinite(value):
        raise DatasetError(f"non-finite {what}: {raw!r}")
    return value


def records_to_dataset(records: list[dict[str, Any]], criteria: list[str], strict: bool = False) -> ReviewDataset:
    """Assemble a dataset from row dicts keyed by ``paper_id``, ``reviewer_id``, criteria and ``overall``."""
    if not records:
        raise DatasetError("no review rows")
    cells: dict[tuple[str, str], tuple[list[float], float]] = {}
    for k, rec in enumerate(records, start=1):
        try:
            pid, rid = str(rec["paper_id"]), str(rec["reviewer_id"])
        except KeyError as exc:
            raise DatasetError(f"row {k}: missing field {exc.args[0]}") from None
        if (pid, rid) in cells:
            raise DatasetError(f"duplicate row for paper {pid!r}, reviewer {rid!r}")
        vec = [_number(rec.get(c), f"score {c} in row {k}") for c in criteria]
        cells[(pid, rid)] = (vec, _number(rec.get("overall"), f"overall in row {k}"))
    papers = sorted({p for p, _ in cells})
    reviewers = sorted({r for _, r in cells})
    scores = np.full((len(reviewers), len(papers), len(criteria)), np.nan)
    recs = np.full((len(reviewers), len(papers)), np.nan)
    pidx = {p: a for a, p in enumerate(papers)}
    ridx = {r: i for i, r in enumerate(reviewers)}
    for (pid, rid), (vec, overall) in cells.items():
        scores[ridx[rid], pidx[pid]] = vec
        recs[ridx[rid], pidx[pid]] = overall
    return validate_dataset(scores, recs, reviewer_ids=reviewers, paper_ids=papers, strict=strict)


def parse_reviews(path, fmt: str | None = None, strict: bool = False) -> ReviewDataset:
    """Read a review file (CSV or its JSON mirror).

    CSV header: ``paper_id,reviewer_id,c1,...,cd,overall``, one row per
    (paper, reviewer) cell.  JSON: a list of objects with the same keys.
    Ids are mapped to indices in lexicographic order.
    """
    path = Path(path)
    fmt = _detect_format(path, fmt)
    if fmt == "csv":
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DatasetError("empty file") from None
            if len(header) < 4 or header[:2] != ["paper_id", "reviewer_id"] or header[-1] != "overall":
                raise DatasetError("header must be paper_id,reviewer_id,c1,...,cd,overall")
            records = []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise DatasetError(f"ragged row at line {lineno}: {len(row)} fields, expected {len(header)}")
                records.append(dict(zip(header, (c.strip() for c in row))))
        return records_to_dataset(records, header[2:-1], strict)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON: {exc}") from None
    if not isinstance(data, list) or not all(isinstance(r, dict) for r in data):
        raise DatasetError("JSON input must be a list of review objects")
    if not data:
        raise DatasetError("no review rows")
    key_sets = {tuple(sorted(r)) for r in data}
    if len(key_sets) != 1:
        raise DatasetError("ragged records: review objects have differing keys")
    criteria = sorted((k for k in data[0] if k not in ("paper_id", "reviewer_id", "overall")), key=_criterion_key)
    if not criteria:
        raise DatasetError("no criterion columns")
    return records_to_dataset(data, criteria, strict)


def _criterion_key(name: str):
    digits = name[1:]
    return (0, int(digits), name) if name.startswith("c") and digits.isdigit() else (1, 0, name)


def dataset_records(ds: ReviewDataset) -> list[dict[str, Any]]:
    rows = []
    for a, pid in enumerate(ds.paper_ids):
        for i, rid in enumerate(ds.reviewer_ids):
            row: dict[str, Any] = {"paper_id": pid, "reviewer_id": rid}
            for j in range(ds.num_criteria):
                row[f"c{j + 1}"] = float(ds.scores[i, a, j])
            row["overall"] = float(ds.recommendations[i, a])
            rows.append(row)
    return rows


def write_reviews(ds: ReviewDataset, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _detect_format(path, fmt)
    rows = dataset_records(ds)
    if fmt == "json":
        path.write_text(json.dumps([{k: _round(v) for k, v in r.items()} for r in rows], indent=2, sort_keys=True) + "\n")
        return
    header = ["paper_id", "reviewer_id"] + [f"c{j + 1}" for j in range(ds.num_criteria)] + ["overall"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([r["paper_id"], r["reviewer_id"]] + [_fmt(r[h]) for h in header[2:]])


def _fmt(x: float) -> str:
    return format(float(x), f".{SIG_DIGITS}g")


def _round(x):
    return float(_fmt(x)) if isinstance(x, float) else x


def residual_ranking(ds: ReviewDataset, fitted: FittedValues | np.ndarray, top: int | None = None) -> list[dict[str, Any]]:
    """Cells sorted by |y - fitted| descending: candidates for commensuration bias."""
    values = fitted.values if isinstance(fitted, FittedValues) else np.asarray(fitted)
    resid = np.abs(ds.recommendations - values)
    order = sorted(np.ndindex(resid.shape), key=lambda c: (-resid[c], c[1], c[0]))
    rows = [
        {
            "reviewer_id": ds.reviewer_ids[i],
            "paper_id": ds.paper_ids[a],
            "recommendation": float(ds.recommendations[i, a]),
            "fitted": float(values[i, a]),
            "residual": float(resid[i, a]),
        }
        for i, a in order
    ]
    return rows if top is None else rows[:top]


# ---------------------------------------------------------------------------
# reports


@dataclass
class Report:
    """JSON-serializable run record; ``config`` embeds every parameter and seed."""

    command: str
    config: dict[str, Any]
    sections: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return jsonable({"command": self.command, "config": self.config, **self.sections})


def dataset_to_dict(ds: ReviewDataset) -> dict[str, Any]:
    return {
        "paper_ids": list(ds.paper_ids),
        "reviewer_ids": list(ds.reviewer_ids),
        "scores": ds.scores.tolist(),
        "recommendations": ds.recommendations.tolist(),
    }


def dataset_from_dict(data: dict[str, Any]) -> ReviewDataset:
    return validate_dataset(
        np.asarray(data["scores"], dtype=float),
        np.asarray(data["recommendations"], dtype=float),
        reviewer_ids=data["reviewer_ids"],
        paper_ids=data["paper_ids"],
    )


def jsonable(obj):
    """Recursively convert to plain JSON types with floats at 12 significant digits."""
    if isinstance(obj, ReviewDataset):
        return jsonable(dataset_to_dict(obj))
    if isinstance(obj, Params):
        return {"p": _round(float(obj.p)), "q": _round(float(obj.q)), "seed": obj.seed, "tolerance": _round(float(obj.tolerance))}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if not math.isfinite(value):
            return str(value)
        value = float(_fmt(value))
        return 0.0 if value == 0 else value
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "__dict__"):
        return jsonable(vars(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def report_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def emit_report(report: Report, path=None, csv_path=None) -> str:
    """Write the report as deterministic JSON; optionally a per-row CSV of solutions and residuals."""
    text = report_json(report)
    if path is not None:
        Path(path).write_text(text)
    if csv_path is not None:
        with Path(csv_path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["kind", "paper_id", "reviewer_id", "value", "recommendation", "residual"])
            for row in report.sections.get("solution", []):
                writer.writerow(["solution", row["paper_id"], "", _fmt(row["score"]), "", ""])
            for row in report.sections.get("residual_ranking", []):
                writer.writerow(
                    ["residual", row["paper_id"], row["reviewer_id"], _fmt(row["fitted"]), _fmt(row["recommendation"]), _fmt(row["residual"])]
                )
    return text
