"""Report emission: one JSON document and one CSV table per evaluation.

The JSON layout is:

  {"per_image": [{"id", "dice", "pq", "dq", "sq", "n_tp", "n_fp", "n_fn",
                  "flags"}, ...],
   "aggregate_mean": {...same metric keys..., "n_images"},
   "aggregate_pooled": {...},
   "failures": [{"id", "stage", "error"}, ...]}

aggregate_mean is the unweighted per-image mean; aggregate_pooled sums the
match counts and pixel totals over the dataset first and computes the metrics
once from those. Rows are sorted by image id and floats are emitted with
full round-trip precision, so identical inputs produce identical bytes.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

from .labelio import _atomic_write, dump_json
from .metrics import MetricsReport
from .pipeline import ReportBundle

__all__ = ["bundle_to_obj", "write_report_csv", "write_report_json"]

_CSV_COLUMNS = ("id", "dice", "pq", "dq", "sq", "n_tp", "n_fp", "n_fn", "flags")


def _metrics_row(report: MetricsReport, row_id: str) -> dict:
    return {
        "id": row_id,
        "dice": report.dice,
        "pq": report.pq,
        "dq": report.dq,
        "sq": report.sq,
        "n_tp": report.n_tp,
        "n_fp": report.n_fp,
        "n_fn": report.n_fn,
        "flags": sorted(report.flags),
    }


def bundle_to_obj(bundle: ReportBundle) -> dict:
    per_image = [_metrics_row(r, r.image_id or "") for r in bundle.per_image]
    obj = {"per_image": per_image, "failures": list(bundle.failures)}
    for key, agg in (
        ("aggregate_mean", bundle.aggregate_mean),
        ("aggregate_pooled", bundle.aggregate_pooled),
    ):
        if agg is None:
            obj[key] = None
        else:
            row = _metrics_row(agg, key)
            del row["id"], row["flags"]
            row["n_images"] = agg.n_images
            obj[key] = row
    return obj


def write_report_json(bundle: ReportBundle, path) -> None:
    dump_json(bundle_to_obj(bundle), path)


def write_report_csv(bundle: ReportBundle, path) -> None:
    rows = [_metrics_row(r, r.image_id or "") for r in bundle.per_image]
    for key, agg in (
        ("aggregate_mean", bundle.aggregate_mean),
        ("aggregate_pooled", bundle.aggregate_pooled),
    ):
        if agg is not None:
            rows.append(_metrics_row(agg, key))

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        row = dict(row)
        row["flags"] = ";".join(row["flags"])
        for key in ("dice", "pq", "dq", "sq"):
            row[key] = repr(row[key])
        writer.writerow(row)
    text = buf.getvalue()

    def write_fn(f):
        f.write(text.encode("utf-8"))

    _atomic_write(Path(path), write_fn)
