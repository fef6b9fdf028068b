"""CSV ingestion, result serialization and plain-text table rendering.

The tabular input format is RFC-4180-style CSV with a header. Required
columns: ``group_id``, ``treatment`` (0/1), ``outcome`` (numeric). Optional:
``unit_id``, ``saturation`` (0/1, constant within group), ``neighbor_rank``
(permutation of 1..group size within each group), ``reference_ids``
(semicolon-separated unit ids in the same group) and ``group_size`` (guard
column checked against the actual size). Output files format floats with six
significant digits and sort JSON keys, so identical inputs produce
byte-identical results.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .dataset import GroupedDataset
from .errors import DataValidationError

REQUIRED_COLUMNS = ("group_id", "treatment", "outcome")
OPTIONAL_COLUMNS = ("unit_id", "saturation", "neighbor_rank", "reference_ids", "group_size")


def load_dataset(path) -> GroupedDataset:
    """Read and validate a grouped dataset from CSV."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataValidationError(f"{path}: empty file, expected a CSV header")
        header = [h.strip() for h in reader.fieldnames]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataValidationError(f"{path}: missing required column(s) {missing}")
        unknown = [c for c in header if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
        if unknown:
            raise DataValidationError(f"{path}: unknown column(s) {unknown}")
        rows = list(reader)
    if not rows:
        raise DataValidationError(f"{path}: no data rows")

    def parse_int(value, row, column, allowed=None):
        try:
            out = int(str(value).strip())
        except (TypeError, ValueError):
            raise DataValidationError(
                f"cannot parse integer from {value!r}", row=row, column=column
            ) from None
        if allowed is not None and out not in allowed:
            raise DataValidationError(
                f"value must be one of {sorted(allowed)}, got {out}", row=row, column=column
            )
        return out

    group_id, treatment, outcome = [], [], []
    unit_id = [] if "unit_id" in header else None
    saturation = [] if "saturation" in header else None
    rank = [] if "neighbor_rank" in header else None
    refs = [] if "reference_ids" in header else None
    sizes = [] if "group_size" in header else None

    for i, row in enumerate(rows, start=1):
        gid = (row.get("group_id") or "").strip()
        if not gid:
            raise DataValidationError("empty group_id", row=i, column="group_id")
        group_id.append(gid)
        treatment.append(parse_int(row.get("treatment"), i, "treatment", allowed={0, 1}))
        raw_y = (row.get("outcome") or "").strip()
        try:
            y = float(raw_y)
        except ValueError:
            raise DataValidationError(
                f"cannot parse outcome {raw_y!r}", row=i, column="outcome"
            ) from None
        if math.isnan(y):
            raise DataValidationError("outcome is missing", row=i, column="outcome")
        outcome.append(y)
        if unit_id is not None:
            uid = (row.get("unit_id") or "").strip()
            if not uid:
                raise DataValidationError("empty unit_id", row=i, column="unit_id")
            unit_id.append(uid)
        if saturation is not None:
            saturation.append(parse_int(row.get("saturation"), i, "saturation", allowed={0, 1}))
        if rank is not None:
            value = parse_int(row.get("neighbor_rank"), i, "neighbor_rank")
            if value < 1:
                raise DataValidationError(
                    f"neighbor_rank must be >= 1, got {value}", row=i, column="neighbor_rank"
                )
            rank.append(value)
        if refs is not None:
            raw = (row.get("reference_ids") or "").strip()
            refs.append(tuple(p.strip() for p in raw.split(";") if p.strip()) if raw else ())
        if sizes is not None:
            sizes.append(parse_int(row.get("group_size"), i, "group_size"))

    ds = GroupedDataset.from_arrays(
        group_id,
        treatment,
        outcome,
        unit_id=unit_id,
        saturation=saturation,
        neighbor_rank=rank,
        reference_ids=refs,
    )
    if sizes is not None:
        actual = {g: int(n) for g, n in zip(ds.group_labels, ds.sizes)}
        for i, (gid, declared) in enumerate(zip(group_id, sizes), start=1):
            if declared != actual[gid]:
                raise DataValidationError(
                    f"group {gid!r} has {actual[gid]} rows but group_size says {declared}",
                    row=i,
                    column="group_size",
                )
    return ds


def save_dataset(ds: GroupedDataset, path) -> None:
    """Write a dataset back to CSV in the canonical column layout."""
    path = Path(path)
    header = ["group_id", "unit_id", "treatment", "outcome"]
    if ds.saturation is not None:
        header.append("saturation")
    if ds.neighbor_rank is not None:
        header.append("neighbor_rank")
    if ds.reference_sets is not None:
        header.append("reference_ids")
    group_of_unit = ds.group_codes
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(ds.n_units):
            g = group_of_unit[i]
            row = [
                ds.group_labels[g],
                ds.unit_labels[i],
                int(ds.treatment[i]),
                repr(float(ds.outcome[i])),  # full precision so reload is exact
            ]
            if ds.saturation is not None:
                row.append(int(ds.saturation[g]))
            if ds.neighbor_rank is not None:
                row.append(int(ds.neighbor_rank[i]))
            if ds.reference_sets is not None:
                row.append(";".join(ds.unit_labels[j] for j in ds.reference_sets[i]))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Formatting helpers
# ---------------------------------------------------------------------------

def fmt(value) -> str:
    """Six-significant-digit rendering; NA for missing values."""
    if value is None:
        return "NA"
    if isinstance(value, float) and math.isnan(value):
        return "NA"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.6g}"
    return str(value)


def round_floats(obj):
    """Recursively round floats to six significant digits for stable JSON."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(
        json.dumps(round_floats(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_coverage_csv(records, path) -> None:
    """Long-format coverage table with the fixed header n,mechanism,ci_kind,coverage."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "mechanism", "ci_kind", "coverage"])
        for rec in records:
            writer.writerow(
                [rec["n"], rec["mechanism"], rec["ci_kind"], fmt(rec["coverage"])]
            )


def text_table(headers, rows) -> str:
    """Aligned plain-text table."""
    cells = [[str(h) for h in headers]] + [[fmt(c) for c in row] for row in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(headers))]
    lines = []
    for idx, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
