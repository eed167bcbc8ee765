"""Uniformity metrics and comparison tables."""

from __future__ import annotations

import csv
import io
import math

import numpy as np


def std_metric(loads) -> float:
    """Population standard deviation of bin loads about the ideal mean ``m / n``."""
    lv = np.asarray(loads, dtype=np.float64)
    if lv.ndim != 1 or lv.size < 1:
        raise ValueError("need at least one bin")
    if np.any(lv < 0):
        raise ValueError("loads must be non-negative")
    mean = lv.sum() / lv.size
    return math.sqrt(float(np.sum((lv - mean) ** 2)) / lv.size)


def bin_of(positions, n_bins: int, T: int) -> np.ndarray:
    """Index of the equal ring segment ``[j*T/n, (j+1)*T/n)`` holding each position."""
    pos = np.asarray(positions, dtype=np.int64)
    return (pos.astype(object) * n_bins // T).astype(np.int64) if T * n_bins >= 2 ** 63 else pos * n_bins // T


def sorted_bin_counts(keys, mapper, n_bins: int, T: int) -> np.ndarray:
    """Ascending per-bin counts after mapping every key onto ``n_bins`` ring segments.

    ``mapper`` takes the whole key array and returns ring positions in ``[0, T)``.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    positions = np.asarray(mapper(keys), dtype=np.int64)
    counts = np.bincount(bin_of(positions, n_bins, T), minlength=n_bins)
    return np.sort(counts)


def spread(counts) -> float:
    """``(max - min) / mean`` of a count vector."""
    c = np.asarray(counts, dtype=np.float64)
    return float((c.max() - c.min()) / c.mean())


def compare_table(results: dict, reference: str = "dlb") -> list[dict]:
    """Summarise per-method std values across runs.

    ``results`` maps method name to a list of per-run load vectors. Each row
    carries the mean/min/max std plus the plain ratio and the excess ratio
    ``(std - ref) / ref`` against the reference method (``nan`` when the
    reference is absent).
    """
    if len(results) < 2:
        raise ValueError("compare_table needs at least two methods")
    stds = {name: [std_metric(lv) for lv in runs] for name, runs in results.items()}
    ref = float(np.mean(stds[reference])) if reference in stds else float("nan")
    rows = []
    for name, values in stds.items():
        mean = float(np.mean(values))
        ratio = mean / ref if ref > 0 else float("nan")
        rows.append({
            "method": name,
            "runs": len(values),
            "mean_std": mean,
            "min": float(np.min(values)),
            "max": float(np.max(values)),
            f"ratio_vs_{reference}": ratio,
            f"excess_ratio_vs_{reference}": ratio - 1.0,
        })
    return rows


def rows_to_csv(rows, columns=None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0])
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
