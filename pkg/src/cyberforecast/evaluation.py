"""Warnings, Hungarian matching against ground truth, P/R/F1, MAE/RMSE/MASE and lift."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateError, LengthError, MixedTypeError
from .series import DailySeries, EventType

LIFT_FLOOR = 0.01


@dataclass(frozen=True, order=True)
class Warning:
    day: int
    event_type: EventType
    target: str
    model_id: str = ""


@dataclass(frozen=True, order=True)
class GtEvent:
    day: int
    event_type: EventType
    target: str


@dataclass(frozen=True)
class MatchReport:
    pairs: tuple[tuple[Warning, GtEvent], ...]
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, pairs=()) -> "MatchReport":
        return cls(tuple(pairs), tp, fp, fn)

    @property
    def precision(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[1]

    @property
    def f1(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[2]

    @property
    def n_warnings(self) -> int:
        return self.tp + self.fp

    @property
    def n_events(self) -> int:
        return self.tp + self.fn


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def round_half_even(x) -> np.ndarray:
    return np.round(np.asarray(x, dtype=np.float64))


def counts_to_warnings(forecast: DailySeries, event_type: EventType | str, target: str,
                       model_id: str = "") -> list[Warning]:
    """``round_half_even(max(0, v))`` warnings on each forecast day."""
    et = EventType.parse(event_type) if isinstance(event_type, str) else event_type
    counts = round_half_even(np.maximum(forecast.values, 0.0)).astype(int)
    out = []
    for i, n in enumerate(counts):
        out.extend([Warning(forecast.start_day + i, et, target, model_id)] * int(n))
    return out


def series_to_events(gt: DailySeries, event_type: EventType | str, target: str) -> list[GtEvent]:
    et = EventType.parse(event_type) if isinstance(event_type, str) else event_type
    out = []
    for i, n in enumerate(gt.values.astype(int)):
        out.extend([GtEvent(gt.start_day + i, et, target)] * int(n))
    return out


def similarity_matrix(warning_days, event_days, window_days: float, quality: float = 1.0) -> np.ndarray:
    w = np.asarray(warning_days, dtype=np.int64)
    g = np.asarray(event_days, dtype=np.int64)
    dist = np.abs(w[:, None] - g[None, :])
    return np.where(dist <= window_days, float(quality), 0.0)


def _check_homogeneous(warnings: Sequence[Warning], events: Sequence[GtEvent]) -> None:
    keys = {(x.event_type, x.target) for x in warnings} | {(x.event_type, x.target) for x in events}
    if len(keys) > 1:
        raise MixedTypeError(f"warnings/events span several (event_type, target) keys: {sorted(keys)}")


def hungarian_match(warnings: Sequence[Warning], events: Sequence[GtEvent],
                    window_days: float | None = None, quality: float = 1.0) -> MatchReport:
    """Maximum-similarity one-to-one matching of warnings to events.

    ``sim(w, g) = quality`` when ``|day_w - day_g| <= window_days`` and 0
    otherwise; zero-similarity pairs are never reported as matches.
    """
    _check_homogeneous(warnings, events)
    if window_days is None:
        first = next(iter(warnings), None) or next(iter(events), None)
        window_days = first.event_type.match_window_days if first else 0.0
    if not warnings or not events:
        return MatchReport((), 0, len(warnings), len(events))
    sim = similarity_matrix([w.day for w in warnings], [g.day for g in events], window_days, quality)
    rows, cols = linear_sum_assignment(sim, maximize=True)
    pairs = tuple((warnings[i], events[j]) for i, j in zip(rows, cols) if sim[i, j] > 0)
    tp = len(pairs)
    return MatchReport(pairs, tp, len(warnings) - tp, len(events) - tp)


def match_counts(forecast: DailySeries, actual: DailySeries, event_type: EventType | str,
                 target: str = "", model_id: str = "") -> MatchReport:
    et = EventType.parse(event_type) if isinstance(event_type, str) else event_type
    return hungarian_match(counts_to_warnings(forecast, et, target, model_id),
                           series_to_events(actual, et, target), et.match_window_days)


@dataclass(frozen=True)
class ErrorMetrics:
    mae: float
    rmse: float
    mase: float | None

    @property
    def mase_defined(self) -> bool:
        return self.mase is not None


def error_metrics(actual: DailySeries | Sequence[float], predicted: DailySeries | Sequence[float]) -> ErrorMetrics:
    """MAE, RMSE and MASE (scaled by the in-sample lag-1 naive MAE of ``actual``).

    Raises DegenerateError for a constant ``actual``; the exception's
    ``partial`` holds the metrics with ``mase=None``.
    """
    y = np.asarray(actual.values if isinstance(actual, DailySeries) else actual, dtype=np.float64)
    yhat = np.asarray(predicted.values if isinstance(predicted, DailySeries) else predicted, dtype=np.float64)
    if y.shape != yhat.shape:
        raise LengthError(f"actual has {y.size} values, predicted {yhat.size}")
    if y.size < 2:
        raise LengthError("error metrics need at least 2 days")
    e = y - yhat
    mae = float(np.mean(np.abs(e)))
    rmse = float(math.sqrt(np.mean(e * e)))
    scale = float(np.mean(np.abs(np.diff(y))))
    if scale == 0.0:
        raise DegenerateError("MASE undefined: actual series is constant",
                              partial=ErrorMetrics(mae, rmse, None))
    return ErrorMetrics(mae, rmse, mae / scale)


def error_metrics_lenient(actual, predicted) -> ErrorMetrics:
    try:
        return error_metrics(actual, predicted)
    except DegenerateError as exc:
        return exc.partial


@dataclass(frozen=True)
class Lift:
    value: float
    floored: bool

    def __float__(self) -> float:
        return self.value


def lift(f1_model: float, f1_baseline: float, floor: float = LIFT_FLOOR) -> Lift:
    """``f1_model / max(f1_baseline, floor)``; ``floored`` marks when the floor applied.

    Equal scores give exactly 1.0 (also when both are 0).
    """
    if not (0.0 <= f1_model <= 1.0 and 0.0 <= f1_baseline <= 1.0):
        raise ValueError("F1 scores must lie in [0, 1]")
    if f1_model == f1_baseline:
        return Lift(1.0, False)
    denom = max(f1_baseline, floor)
    return Lift(f1_model / denom, f1_baseline < floor)
