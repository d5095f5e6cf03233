"""Lagged cross-correlation between ground truth and external signals; lag alignment."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateError, LengthError, OverlapError
from .series import DailySeries, SignalCatalog, shift

logger = logging.getLogger(__name__)

DEFAULT_LAGS = (-30, 0)
MIN_OVERLAP = 30
TIE_TOL = 1e-12


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthError(f"pearson needs equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 3:
        raise LengthError("pearson needs at least 3 points")
    da = a - a.mean()
    db = b - b.mean()
    sa = math.sqrt(float(da @ da))
    sb = math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0 or sa < 1e-12 * max(1.0, float(np.abs(a).max())) \
            or sb < 1e-12 * max(1.0, float(np.abs(b).max())):
        raise DegenerateError("correlation undefined for a constant vector")
    r = float(da @ db) / (sa * sb)
    return max(-1.0, min(1.0, r))


def overlap(gt: DailySeries, signal: DailySeries) -> tuple[int, int]:
    return max(gt.start_day, signal.start_day), min(gt.end_day, signal.end_day)


def align(signal: DailySeries, lag: int) -> DailySeries:
    """Shift ``signal`` so its value at day t-|lag| lands on day t (lag <= 0 means leading)."""
    return shift(signal, lag)


@dataclass(frozen=True)
class CorrelationResult:
    signal_id: str
    best_lag: int
    best_r: float
    per_lag_r: tuple[float, ...]
    lags: tuple[int, ...]
    overlap_len: int
    degenerate_lags: tuple[int, ...] = ()
    flagged: bool = False
    note: str = ""


def _lag_values(lag_range) -> list[int]:
    lo, hi = lag_range
    if lo > hi:
        raise ValueError(f"empty lag range {lag_range}")
    return list(range(lo, hi + 1))


def best_lag(gt: DailySeries, signal: DailySeries, lag_range=DEFAULT_LAGS, signal_id: str = "",
             absolute: bool = False, min_overlap: int = MIN_OVERLAP) -> CorrelationResult:
    """Pearson r of ``gt`` against the aligned signal at each lag; keep the best.

    "Best" is the signed maximum (``absolute=True`` ranks by |r|).  Ties go
    to the lag closest to zero; lags with a constant overlap count as r = 0.
    """
    lags = _lag_values(lag_range)
    per_lag, degenerate = [], []
    overlap_len = None
    for lag in lags:
        if abs(lag) >= len(signal):
            raise OverlapError(f"lag {lag} exceeds signal length {len(signal)}")
        shifted = shift(signal, lag)
        lo, hi = overlap(gt, shifted)
        n = hi - lo + 1
        if n < min_overlap:
            raise OverlapError(f"signal {signal_id or '?'}: overlap {max(n, 0)} days at lag {lag} "
                               f"(need {min_overlap})")
        if lag == 0 or overlap_len is None:
            overlap_len = n
        try:
            r = pearson(gt.values_for(lo, hi), shifted.values_for(lo, hi))
        except DegenerateError:
            r = 0.0
            degenerate.append(lag)
        per_lag.append(r)

    key = (lambda r: abs(r)) if absolute else (lambda r: r)
    # scores within TIE_TOL of the maximum are ties (rounding noise), resolved toward lag 0
    top = max(key(r) for r in per_lag)
    best_i = min((i for i in range(len(lags)) if key(per_lag[i]) >= top - TIE_TOL),
                 key=lambda i: abs(lags[i]))
    return CorrelationResult(signal_id, lags[best_i], per_lag[best_i], tuple(per_lag), tuple(lags),
                             overlap_len, tuple(degenerate), bool(degenerate))


def _score_one(args):
    gt, entry, lag_range, absolute, min_overlap = args
    try:
        return best_lag(gt, entry.series, lag_range, entry.signal_id, absolute, min_overlap)
    except (OverlapError, LengthError) as exc:
        lags = tuple(_lag_values(lag_range))
        return CorrelationResult(entry.signal_id, 0, 0.0, tuple(0.0 for _ in lags), lags,
                                 0, (), True, f"no usable overlap: {exc}")


def rank_signals(gt: DailySeries, catalog: SignalCatalog, lag_range=DEFAULT_LAGS,
                 absolute: bool = False, min_overlap: int = MIN_OVERLAP) -> list[CorrelationResult]:
    """One result per signal, best first; signals without usable overlap go last."""
    results = [_score_one((gt, e, lag_range, absolute, min_overlap)) for e in catalog]
    key = (lambda r: abs(r.best_r)) if absolute else (lambda r: r.best_r)
    usable = [r for r in results if r.overlap_len > 0]
    unusable = [r for r in results if r.overlap_len == 0]
    # sorted() is stable, so equal scores keep catalog order
    return sorted(usable, key=lambda r: -key(r)) + unusable


def write_rank_tables(results: list[CorrelationResult], catalog: SignalCatalog,
                      out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``correlations.csv`` and ``correlations_per_lag.csv`` (one r column per lag)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / "correlations.csv"
    per_lag = out_dir / "correlations_per_lag.csv"
    with summary.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["signal_id", "source", "keyword", "best_lag", "best_r", "overlap_len", "flagged"])
        for r in results:
            e = catalog[r.signal_id]
            w.writerow([r.signal_id, e.source.value, e.keyword, r.best_lag, f"{r.best_r:.6f}",
                        r.overlap_len, int(r.flagged)])
    with per_lag.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        lags = list(results[0].lags) if results else []
        w.writerow(["signal_id"] + [f"lag_{lag}" for lag in lags])
        for r in results:
            w.writerow([r.signal_id] + [f"{val:.6f}" for val in r.per_lag_r])
    return summary, per_lag


def heatmap_table(results: list[CorrelationResult]) -> tuple[list[str], list[int], np.ndarray]:
    """Signals x lags matrix of r for plotting."""
    if not results:
        return [], [], np.zeros((0, 0))
    lags = list(results[0].lags)
    return [r.signal_id for r in results], lags, np.array([r.per_lag_r for r in results])
