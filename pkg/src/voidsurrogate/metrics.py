"""Percentile-based error metrics and CSV exports.

For a scalar statistic ``s`` of a field (mean, max or a percentile, taken
over solid pixels only) the error for one sample is

    100 * |s(predicted) - s(true)| / s(true)

and a report holds the mean of that quantity over samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STATS = ("average", "maximum", "p50", "p90", "p97", "p99")
METRIC_DEFINITION = (
    "mean over samples of 100*|s(pred)-s(true)|/s(true); s computed over solid pixels; "
    "percentiles by linear interpolation"
)
CSV_COLUMNS = ["sample_stat", *STATS]


def _num(v) -> str:
    return repr(float(v))


def field_statistic(stress, mask, stat: str) -> float:
    """Statistic of ``stress`` over pixels where ``mask`` is non-zero.

    ``stat`` is ``"average"``, ``"maximum"`` or ``"p<q>"`` for the q-th percentile.
    """
    vals = np.asarray(stress, dtype=float)[np.asarray(mask) != 0]
    if vals.size == 0:
        raise ValueError("no solid pixels")
    if stat == "average":
        return float(vals.mean())
    if stat == "maximum":
        return float(vals.max())
    if stat.startswith("p"):
        return float(np.percentile(vals, float(stat[1:])))
    raise ValueError(f"unknown statistic {stat!r}")


def field_statistics(stress, mask) -> np.ndarray:
    vals = np.asarray(stress, dtype=float)[np.asarray(mask) != 0]
    if vals.size == 0:
        raise ValueError("no solid pixels")
    pct = np.percentile(vals, [50, 90, 97, 99])
    return np.concatenate([[vals.mean(), vals.max()], pct])


@dataclass
class ErrorReport:
    errors: dict[str, float]
    per_sample: np.ndarray
    field_errors: np.ndarray
    sample_ids: list[int]
    best: int
    worst: int
    definition: str = METRIC_DEFINITION
    extra: dict = field(default_factory=dict)

    def row(self) -> list[float]:
        return [self.errors[s] for s in STATS]

    def to_csv(self, path, label: str = "mean") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            w.writerow([label, *(_num(v) for v in self.row())])

    def per_sample_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*CSV_COLUMNS, "field_rel_l2"])
            for sid, errs, fe in zip(self.sample_ids, self.per_sample, self.field_errors):
                w.writerow([f"sample_{sid}", *(_num(e) for e in errs), _num(fe)])


def error_table(pred_fields, true_fields, masks, sample_ids=None) -> ErrorReport:
    """Build a report from predicted and true fields directly."""
    pred_fields = np.asarray(pred_fields, dtype=float)
    true_fields = np.asarray(true_fields, dtype=float)
    n = true_fields.shape[0]
    if n == 0:
        raise ValueError("empty sample list")
    ids = list(range(n)) if sample_ids is None else list(sample_ids)
    per = np.empty((n, len(STATS)))
    ferr = np.empty(n)
    for i in range(n):
        st = field_statistics(true_fields[i], masks[i])
        sp = field_statistics(pred_fields[i], masks[i])
        assert np.all(st > 0), "true field statistic is zero"
        per[i] = 100.0 * np.abs(sp - st) / st
        ferr[i] = np.linalg.norm(pred_fields[i] - true_fields[i]) / np.linalg.norm(true_fields[i])
    errors = dict(zip(STATS, per.mean(0).tolist()))
    return ErrorReport(errors, per, ferr, ids, ids[int(np.argmin(ferr))], ids[int(np.argmax(ferr))])


def error_report(pipeline, samples, sample_ids=None) -> ErrorReport:
    """Predict every sample's mask and compare to its true stress field."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample list")
    masks = np.stack([s.mask for s in samples])
    true = np.stack([s.stress for s in samples])
    return error_table(pipeline.predict_fields(masks), true, masks, sample_ids)


def write_cross_sections(path, true_field, pred_field, grid) -> None:
    """Horizontal and vertical centre-line profiles of one sample as CSV."""
    x = (np.arange(grid.nx) + 0.5) * grid.lx / grid.nx
    z = (np.arange(grid.ny) + 0.5) * grid.ly / grid.ny
    r, c = grid.ny // 2, grid.nx // 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line", "position_m", "true", "predicted"])
        for i in range(grid.nx):
            w.writerow(["horizontal", _num(x[i]), _num(true_field[r, i]), _num(pred_field[r, i])])
        for i in range(grid.ny):
            w.writerow(["vertical", _num(z[i]), _num(true_field[i, c]), _num(pred_field[i, c])])


def write_study_csv(rows, path) -> None:
    """Size-study table, one row per (size, framework)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_samples", "model", *STATS, "status"])
        for r in rows:
            if r.report is None:
                w.writerow([r.size, r.framework, *[""] * len(STATS), f"failed: {r.error}"])
            else:
                w.writerow([r.size, r.framework, *(_num(v) for v in r.report.row()), "ok"])
