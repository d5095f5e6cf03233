"""Rolling monthly/weekly backtests, signal x model sweeps, best-signal tables, synthetic data."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import math
import warnings as _warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import arima, baseline, rnn
from .errors import CoverageError, DataError, ForecastError, SpecError
from .evaluation import (ErrorMetrics, MatchReport, counts_to_warnings, error_metrics_lenient,
                         hungarian_match, lift, precision_recall_f1, series_to_events)
from .series import (DailySeries, EventType, SeriesKind, SignalCatalog, SignalEntry, Source,
                     day_index, days_in_month, iso, month_start, next_month_start,
                     prev_month_start, to_date, week_start)
from .signals import DEFAULT_LAGS, align, best_lag

logger = logging.getLogger(__name__)

ENDOGENOUS = "__endogenous__"
BASELINE_LABEL = "baseline"


class Cadence(str, enum.Enum):
    MONTHLY = "Monthly"
    WEEKLY = "Weekly"

    @classmethod
    def parse(cls, text: str) -> "Cadence":
        for c in cls:
            if c.value.lower() == text.strip().lower():
                return c
        raise ValueError(f"unknown cadence {text!r}")


class ModelKind(str, enum.Enum):
    BASELINE = "BaselineArima"
    ARIMA = "Arima"
    ARIMAX = "Arimax"
    GRU = "Gru"
    LSTM = "Lstm"

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        key = text.strip().lower().replace("_", "")
        for k in cls:
            if k.value.lower() == key:
                return k
        if key in ("baseline", "poisson"):
            return cls.BASELINE
        raise ValueError(f"unknown model kind {text!r}")

    @property
    def label(self) -> str:
        return {"BaselineArima": "baseline_arima", "Arima": "ARIMA", "Arimax": "ARIMAX",
                "Gru": "GRU", "Lstm": "LSTM"}[self.value]

    @property
    def uses_signals(self) -> bool:
        return self in (ModelKind.ARIMAX, ModelKind.GRU, ModelKind.LSTM)


MODEL_ORDER = [ModelKind.GRU, ModelKind.LSTM, ModelKind.ARIMAX, ModelKind.ARIMA, ModelKind.BASELINE]
EVENT_ORDER = [EventType.MALICIOUS_DESTINATION, EventType.ENDPOINT_MALWARE, EventType.MALICIOUS_EMAIL]


@dataclass(frozen=True)
class RnnSettings:
    hidden_dim: int = 16
    lookback: int = 7
    epochs: int = 200
    learning_rate: float = 1e-2
    validation_fraction: float = 0.2
    batch_size: int = 0


@dataclass(frozen=True)
class ModelSettings:
    arima_grid: arima.GridConfig = arima.ARIMA_GRID
    arimax_grid: arima.GridConfig = arima.ARIMAX_GRID
    rnn: RnnSettings = RnnSettings()
    # None: the whole training history is the Poisson window
    baseline_window: int | None = None
    lag_range: tuple[int, int] = DEFAULT_LAGS
    absolute_correlation: bool = False
    min_train_days: int = 90
    train_window_days: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSettings":
        data = dict(data)
        if "arima_grid" in data:
            data["arima_grid"] = arima.GridConfig(**data["arima_grid"])
        if "arimax_grid" in data:
            data["arimax_grid"] = arima.GridConfig(**data["arimax_grid"])
        if "rnn" in data:
            data["rnn"] = RnnSettings(**data["rnn"])
        if "lag_range" in data:
            data["lag_range"] = tuple(data["lag_range"])
        return cls(**data)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels (independent of process/hash salt)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") & ((1 << 63) - 1)


# --------------------------------------------------------------------------
# periods
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Period:
    label: str
    start_day: int
    end_day: int
    gt_cutoff: int
    signal_cutoff: int

    @property
    def horizon(self) -> int:
        return self.end_day - self.start_day + 1

    @property
    def gap_len(self) -> int:
        return self.start_day - self.gt_cutoff - 1


def period_for(cadence: Cadence, start_day: int) -> Period:
    """Availability windows for the period beginning on ``start_day``.

    Monthly: GT and signals through the end of the previous month.
    Weekly: GT through the day before the previous month began, signals
    through the end of the previous week.
    """
    if cadence is Cadence.MONTHLY:
        if start_day != month_start(start_day):
            raise ValueError(f"{iso(start_day)} is not the first day of a month")
        end = next_month_start(start_day) - 1
        return Period(to_date(start_day).strftime("%Y-%m"), start_day, end, start_day - 1, start_day - 1)
    if start_day != week_start(start_day):
        raise ValueError(f"{iso(start_day)} is not a Monday")
    y, w, _ = to_date(start_day).isocalendar()
    return Period(f"{y}-W{w:02d}", start_day, start_day + 6, prev_month_start(start_day) - 1,
                  start_day - 1)


def plan_periods(cadence: Cadence, eval_start: int, eval_end: int) -> list[Period]:
    """Whole months / ISO weeks lying inside ``eval_start..eval_end``."""
    periods = []
    if cadence is Cadence.MONTHLY:
        day = eval_start if eval_start == month_start(eval_start) else next_month_start(eval_start)
        while next_month_start(day) - 1 <= eval_end:
            periods.append(period_for(cadence, day))
            day = next_month_start(day)
    else:
        day = week_start(eval_start)
        if day < eval_start:
            day += 7
        while day + 6 <= eval_end:
            periods.append(period_for(cadence, day))
            day += 7
    return periods


def default_eval_span(gt: DailySeries, cadence: Cadence, min_train_days: int = 90) -> tuple[int, int]:
    """Every whole period of GT whose training window holds ``min_train_days``."""
    for p in plan_periods(cadence, gt.start_day, gt.end_day):
        if p.gt_cutoff - gt.start_day + 1 >= min_train_days:
            return p.start_day, gt.end_day
    raise CoverageError(f"GT {iso(gt.start_day)}..{iso(gt.end_day)} is too short for a "
                        f"{cadence.value.lower()} backtest with {min_train_days} training days")


def next_period(cadence: Cadence, after_day: int) -> Period:
    """First full period beginning after ``after_day``."""
    if cadence is Cadence.MONTHLY:
        return period_for(cadence, next_month_start(after_day))
    return period_for(cadence, week_start(after_day) + 7)


# --------------------------------------------------------------------------
# plans and reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BacktestPlan:
    cadence: Cadence
    eval_start_day: int
    eval_end_day: int
    gt: DailySeries
    catalog: SignalCatalog
    event_type: EventType
    target: str
    model_kind: ModelKind
    signal_ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cadence", Cadence(self.cadence))
        object.__setattr__(self, "model_kind", ModelKind(self.model_kind))
        object.__setattr__(self, "signal_ids", tuple(self.signal_ids))
        if not self.gt.covers(self.eval_start_day, self.eval_end_day):
            raise CoverageError(f"evaluation span {iso(self.eval_start_day)}..{iso(self.eval_end_day)} "
                                f"is not inside GT coverage {iso(self.gt.start_day)}..{iso(self.gt.end_day)}")
        if self.signal_ids and not self.model_kind.uses_signals:
            raise ValueError(f"{self.model_kind.value} does not take exogenous signals")

    @property
    def signal_label(self) -> str:
        if self.model_kind is ModelKind.BASELINE:
            return BASELINE_LABEL
        return "+".join(self.signal_ids) if self.signal_ids else ENDOGENOUS


@dataclass(frozen=True)
class PeriodResult:
    period: Period
    train_start: int
    train_end: int
    forecast: DailySeries | None
    actual: DailySeries
    match: MatchReport
    errors: ErrorMetrics | None
    baseline_match: MatchReport
    lags: tuple[int, ...] = ()
    exog_filled_days: int = 0
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)


@dataclass(frozen=True)
class BacktestReport:
    plan_label: str
    model_kind: ModelKind
    signal_label: str
    per_period: tuple[PeriodResult, ...]
    tp: int
    fp: int
    fn: int
    aggregate_f1: float
    mean_period_f1: float
    baseline_f1: float
    baseline_mean_period_f1: float
    aggregate_errors: ErrorMetrics | None
    lift_vs_baseline: float
    lift_floored: bool
    mean_period_lift: float

    @property
    def precision(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[1]


def _lift_value(f1_model: float, f1_base: float) -> tuple[float, bool]:
    res = lift(f1_model, f1_base)
    return res.value, res.floored


# --------------------------------------------------------------------------
# single-period forecasting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PreparedSignal:
    series: DailySeries
    lag: int
    filled_days: int


def prepare_signal(entry: SignalEntry, gt_train: DailySeries, period: Period,
                   settings: ModelSettings) -> PreparedSignal:
    """Correlate on available data, align by the best lag and extend to the period end.

    Aligned values past the signal's availability are unknown at forecast
    time; they are filled with the aligned series' training-window mean.
    """
    available = entry.series.window(entry.series.start_day, period.signal_cutoff) \
        if entry.series.start_day <= period.signal_cutoff else None
    if available is None:
        raise CoverageError(f"signal {entry.signal_id} has no data before {iso(period.signal_cutoff)}")
    corr = best_lag(gt_train, available, settings.lag_range, entry.signal_id,
                    settings.absolute_correlation)
    aligned = align(available, corr.best_lag)
    first = max(aligned.start_day, gt_train.start_day)
    if first > gt_train.end_day:
        raise CoverageError(f"aligned signal {entry.signal_id} does not overlap training GT")
    last = period.end_day
    in_train = aligned.values_for(first, min(gt_train.end_day, aligned.end_day))
    fill = float(np.mean(in_train))
    values = np.full(last - first + 1, fill)
    known_last = min(aligned.end_day, last)
    values[: known_last - first + 1] = aligned.values_for(first, known_last)
    filled = max(0, last - max(known_last, gt_train.end_day))
    return PreparedSignal(DailySeries(first, values), corr.best_lag, filled)


def train_window(gt: DailySeries, period: Period, settings: ModelSettings) -> DailySeries:
    if gt.start_day > period.gt_cutoff:
        raise CoverageError(f"no GT before {iso(period.gt_cutoff + 1)}")
    train = gt.window(gt.start_day, period.gt_cutoff)
    if settings.train_window_days:
        train = train.window(max(train.start_day, train.end_day - settings.train_window_days + 1),
                             train.end_day)
    if len(train) < settings.min_train_days:
        raise CoverageError(f"period {period.label}: {len(train)} training days, "
                            f"need {settings.min_train_days}")
    return train


def forecast_period(kind: ModelKind, gt: DailySeries, catalog: SignalCatalog,
                    signal_ids: Sequence[str], period: Period, settings: ModelSettings,
                    seed: int) -> tuple[DailySeries, DailySeries, tuple[int, ...], int]:
    """Train on what is available before ``period`` and forecast it.

    Returns (forecast, training GT, lags used, exogenous days filled).
    """
    train = train_window(gt, period, settings)
    gap, horizon = period.gap_len, period.horizon

    if kind is ModelKind.BASELINE:
        model = baseline.fit_baseline(train, settings.baseline_window, seed)
        return baseline.baseline_forecast(model, horizon, "Point", period.start_day), train, (), 0

    prepared = [prepare_signal(catalog[s], train, period, settings) for s in signal_ids] \
        if kind.uses_signals else []
    if prepared:
        first = max(p.series.start_day for p in prepared)
        train = train.window(first, train.end_day)
        if len(train) < settings.min_train_days:
            raise CoverageError(f"only {len(train)} training days overlap the aligned signals")
    exog = [p.series for p in prepared]
    lags = tuple(p.lag for p in prepared)
    filled = max((p.filled_days for p in prepared), default=0)

    if kind in (ModelKind.ARIMA, ModelKind.ARIMAX):
        grid = settings.arimax_grid if exog else settings.arima_grid
        model = arima.grid_search(train, exog or None, grid)
        fc = arima.forecast(model, train, exog or None, gap, horizon)
    else:
        r = settings.rnn
        cfg = rnn.RnnConfig(cell=rnn.Cell.GRU if kind is ModelKind.GRU else rnn.Cell.LSTM,
                            input_dim=1 + len(exog), hidden_dim=r.hidden_dim, lookback=r.lookback,
                            epochs=r.epochs, learning_rate=r.learning_rate, seed=seed,
                            validation_fraction=r.validation_fraction, batch_size=r.batch_size)
        model = rnn.train(cfg, train, exog)
        fc = rnn.predict(model, train, exog, gap, horizon)
    return fc, train, lags, filled


# --------------------------------------------------------------------------
# backtests
# --------------------------------------------------------------------------

def _match(forecast: DailySeries | None, actual: DailySeries, event_type: EventType,
           target: str, model_id: str) -> MatchReport:
    warnings = counts_to_warnings(forecast, event_type, target, model_id) if forecast is not None else []
    events = series_to_events(actual, event_type, target)
    return hungarian_match(warnings, events, event_type.match_window_days)


def run_backtest(plan: BacktestPlan, settings: ModelSettings | None = None,
                 seed: int = 0) -> BacktestReport:
    """Rolling evaluation of one (model, signals) cell over every period of the plan.

    Each period trains only on data available before it, forecasts it, and
    matches warnings against the period's GT.  The Poisson baseline is run
    on the identical periods for the lift.  Model failures are recorded on
    the period (no warnings issued) and do not stop the run.
    """
    settings = settings or ModelSettings()
    periods = plan_periods(plan.cadence, plan.eval_start_day, plan.eval_end_day)
    if not periods:
        raise CoverageError("evaluation span contains no complete period")
    first_train = periods[0].gt_cutoff - plan.gt.start_day + 1
    if first_train < settings.min_train_days:
        raise CoverageError(f"only {first_train} days of GT before the first period "
                            f"(need {settings.min_train_days})")
    for s in plan.signal_ids:
        plan.catalog[s]  # KeyError for unknown ids

    model_id = f"{plan.model_kind.value}:{plan.signal_label}"
    results = []
    for idx, period in enumerate(periods):
        actual = plan.gt.window(period.start_day, period.end_day)
        pseed = derive_seed(seed, period.label)
        base_fc, _, _, _ = forecast_period(ModelKind.BASELINE, plan.gt, plan.catalog, (), period,
                                           settings, pseed)
        base_match = _match(base_fc, actual, plan.event_type, plan.target, "baseline")
        error, fc, lags, filled = "", None, (), 0
        train = None
        try:
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore", arima.ConvergenceWarning)
                fc, train, lags, filled = forecast_period(plan.model_kind, plan.gt, plan.catalog,
                                                          plan.signal_ids, period, settings, pseed)
        except (ForecastError, KeyError, ValueError, FloatingPointError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            logger.warning("%s %s: %s", model_id, period.label, error)
        if train is None:
            train = train_window(plan.gt, period, settings)
        match = _match(fc, actual, plan.event_type, plan.target, model_id)
        errs = error_metrics_lenient(actual, fc) if fc is not None else None
        results.append(PeriodResult(period, train.start_day, train.end_day, fc, actual, match, errs,
                                    base_match, lags, filled, error))

    tp = sum(r.match.tp for r in results)
    fp = sum(r.match.fp for r in results)
    fn = sum(r.match.fn for r in results)
    f1 = precision_recall_f1(tp, fp, fn)[2]
    btp = sum(r.baseline_match.tp for r in results)
    bfp = sum(r.baseline_match.fp for r in results)
    bfn = sum(r.baseline_match.fn for r in results)
    bf1 = precision_recall_f1(btp, bfp, bfn)[2]
    mean_f1 = float(np.mean([r.match.f1 for r in results]))
    bmean_f1 = float(np.mean([r.baseline_match.f1 for r in results]))

    ok = [r for r in results if r.forecast is not None]
    agg = None
    if ok:
        agg = error_metrics_lenient(np.concatenate([r.actual.values for r in ok]),
                                    np.concatenate([r.forecast.values for r in ok]))
    lv, floored = _lift_value(f1, bf1)
    mlv, _ = _lift_value(mean_f1, bmean_f1)
    label = f"{plan.cadence.value}:{plan.event_type.value}:{plan.target}"
    return BacktestReport(label, plan.model_kind, plan.signal_label, tuple(results), tp, fp, fn, f1,
                          mean_f1, bf1, bmean_f1, agg, lv, floored, mlv)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

SWEEP_COLUMNS = ["rank", "model", "signal_id", "source", "keyword", "event_type", "target", "cadence",
                 "n_periods", "n_failed", "tp", "fp", "fn", "precision", "recall", "f1", "f1_mean",
                 "baseline_f1", "baseline_f1_mean", "lift", "lift_floored", "lift_mean",
                 "mae", "rmse", "mase"]

PERIOD_COLUMNS = ["model", "signal_id", "event_type", "target", "cadence", "period", "start", "end",
                  "train_start", "train_end", "signal_end", "gap_len", "horizon", "lags",
                  "exog_filled_days", "warnings", "events", "tp", "fp", "fn", "precision", "recall",
                  "f1", "baseline_f1", "mae", "rmse", "mase", "error"]


@dataclass(frozen=True)
class SweepCell:
    model_kind: ModelKind
    signal_ids: tuple[str, ...]

    @property
    def signal_label(self) -> str:
        if self.model_kind is ModelKind.BASELINE:
            return BASELINE_LABEL
        return "+".join(self.signal_ids) if self.signal_ids else ENDOGENOUS


@dataclass
class SweepResult:
    rows: list[dict]
    period_rows: list[dict]
    reports: list[BacktestReport] = field(default_factory=list)

    def top(self, n: int = 5) -> list[dict]:
        return self.rows[:n]


def sweep_cells(model_kinds: Iterable[ModelKind], signal_ids: Sequence[str]) -> list[SweepCell]:
    cells = []
    for kind in model_kinds:
        kind = ModelKind(kind)
        if kind is ModelKind.BASELINE or kind is ModelKind.ARIMA:
            cells.append(SweepCell(kind, ()))
            continue
        cells.append(SweepCell(kind, ()))
        cells.extend(SweepCell(kind, (s,)) for s in signal_ids)
    return cells


def _fmt(x: float | None, digits: int = 6) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    return f"{x:.{digits}f}"


def sweep_row(rep: BacktestReport, catalog: SignalCatalog, event_type: EventType, target: str,
               cadence: Cadence) -> dict:
    source = keyword = ""
    if rep.signal_label not in (ENDOGENOUS, BASELINE_LABEL) and "+" not in rep.signal_label:
        e = catalog[rep.signal_label]
        source, keyword = e.source.value, e.keyword
    agg = rep.aggregate_errors
    return {
        "model": rep.model_kind.label, "signal_id": rep.signal_label, "source": source,
        "keyword": keyword, "event_type": event_type.value, "target": target,
        "cadence": cadence.value, "n_periods": len(rep.per_period),
        "n_failed": sum(r.failed for r in rep.per_period), "tp": rep.tp, "fp": rep.fp, "fn": rep.fn,
        "precision": _fmt(rep.precision), "recall": _fmt(rep.recall), "f1": _fmt(rep.aggregate_f1),
        "f1_mean": _fmt(rep.mean_period_f1), "baseline_f1": _fmt(rep.baseline_f1),
        "baseline_f1_mean": _fmt(rep.baseline_mean_period_f1), "lift": _fmt(rep.lift_vs_baseline),
        "lift_floored": int(rep.lift_floored), "lift_mean": _fmt(rep.mean_period_lift),
        "mae": _fmt(agg.mae if agg else None), "rmse": _fmt(agg.rmse if agg else None),
        "mase": _fmt(agg.mase if agg else None),
    }


def period_rows(rep: BacktestReport, event_type: EventType, target: str, cadence: Cadence) -> list[dict]:
    rows = []
    for r in rep.per_period:
        p = r.period
        rows.append({
            "model": rep.model_kind.label, "signal_id": rep.signal_label,
            "event_type": event_type.value, "target": target, "cadence": cadence.value,
            "period": p.label, "start": iso(p.start_day), "end": iso(p.end_day),
            "train_start": iso(r.train_start), "train_end": iso(r.train_end),
            "signal_end": iso(p.signal_cutoff), "gap_len": p.gap_len, "horizon": p.horizon,
            "lags": ";".join(str(x) for x in r.lags), "exog_filled_days": r.exog_filled_days,
            "warnings": r.match.n_warnings, "events": r.match.n_events,
            "tp": r.match.tp, "fp": r.match.fp, "fn": r.match.fn,
            "precision": _fmt(r.match.precision), "recall": _fmt(r.match.recall),
            "f1": _fmt(r.match.f1), "baseline_f1": _fmt(r.baseline_match.f1),
            "mae": _fmt(r.errors.mae if r.errors else None),
            "rmse": _fmt(r.errors.rmse if r.errors else None),
            "mase": _fmt(r.errors.mase if r.errors else None),
            "error": r.error,
        })
    return rows


def _run_cell(args) -> BacktestReport:
    plan, settings, seed = args
    return run_backtest(plan, settings, seed)


def sweep(gt: DailySeries, catalog: SignalCatalog, event_type: EventType, target: str,
          model_kinds: Iterable[ModelKind], cadence: Cadence, eval_start: int, eval_end: int,
          settings: ModelSettings | None = None, master_seed: int = 0, jobs: int = 1,
          signal_ids: Sequence[str] | None = None) -> SweepResult:
    """Backtest every (model, signal) cell plus endogenous and baseline cells; rank by lift.

    Each cell's seed derives from (master_seed, signal, model) so results do
    not depend on scheduling or ``jobs``.
    """
    settings = settings or ModelSettings()
    event_type = EventType(event_type)
    cadence = Cadence(cadence)
    ids = list(catalog.ids if signal_ids is None else signal_ids)
    cells = sweep_cells(model_kinds, ids)
    if not cells:
        raise ValueError("no model kinds requested")
    tasks = []
    for cell in cells:
        plan = BacktestPlan(cadence, eval_start, eval_end, gt, catalog.subset(cell.signal_ids),
                            event_type, target, cell.model_kind, cell.signal_ids)
        tasks.append((plan, settings, derive_seed(master_seed, cell.signal_label, cell.model_kind.value)))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_cell, tasks))
    else:
        reports = [_run_cell(t) for t in tasks]

    rows = [sweep_row(rep, catalog, event_type, target, cadence) for rep in reports]
    order = sorted(range(len(rows)), key=lambda i: (-reports[i].lift_vs_baseline,
                                                    -reports[i].aggregate_f1,
                                                    MODEL_ORDER.index(reports[i].model_kind),
                                                    rows[i]["signal_id"]))
    ranked = []
    for rank, i in enumerate(order, start=1):
        ranked.append({"rank": rank, **rows[i]})
    per_period = [pr for rep in reports for pr in period_rows(rep, event_type, target, cadence)]
    return SweepResult(ranked, per_period, [reports[i] for i in order])


# --------------------------------------------------------------------------
# best signals
# --------------------------------------------------------------------------

BEST_COLUMNS = ["Model", "Event_Type", "Org", "Signal", "F1"]


def _model_rank(label: str) -> int:
    for i, k in enumerate(MODEL_ORDER):
        if k.label == label:
            return i
    return len(MODEL_ORDER)


def _event_rank(value: str) -> int:
    for i, e in enumerate(EVENT_ORDER):
        if e.value == value:
            return i
    return len(EVENT_ORDER)


def best_signals(tables: Iterable[Sequence[dict]]) -> list[dict]:
    """Per (model, event type, org): the row with the highest pooled F1, or ``baseline``.

    Baseline wins whenever no cell of that model strictly beats the
    baseline's F1.  F1 is reported in percent with two decimals.
    """
    groups: dict[tuple[str, str, str], list[dict]] = {}
    for table in tables:
        for row in table:
            if row["model"] == ModelKind.BASELINE.label:
                continue
            groups.setdefault((row["model"], row["event_type"], row["target"]), []).append(row)
    out = []
    for (model, et, target), rows in groups.items():
        def f(r, key="f1"):
            return float(r[key]) if r[key] != "" else 0.0
        best = max(rows, key=lambda r: (f(r), float(r["lift"] or 0), [-ord(c) for c in r["signal_id"]]))
        base_f1 = max(f(r, "baseline_f1") for r in rows)
        if f(best) > base_f1:
            signal, score = best["signal_id"], f(best)
        else:
            signal, score = BASELINE_LABEL, base_f1
        out.append({"Model": model, "Event_Type": et, "Org": target, "Signal": signal,
                    "F1": f"{100.0 * score:.2f}"})
    out.sort(key=lambda r: (_model_rank(r["Model"]), _event_rank(r["Event_Type"]), r["Org"]))
    return out


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    T: int = 400
    base_rate: float = 1.0
    beta: float = 2.0
    lag: int = -7
    n_noise_signals: int = 4
    rho: float = 0.8
    start_day: int = day_index("2017-01-01")

    def validate(self) -> None:
        if not self.base_rate > 0:
            raise SpecError("base_rate must be positive")
        if not -30 <= self.lag <= 0:
            raise SpecError("lag must lie in [-30, 0]")
        if self.n_noise_signals < 0:
            raise SpecError("n_noise_signals must be >= 0")
        if not -1 < self.rho < 1:
            raise SpecError("rho must lie in (-1, 1)")
        if self.beta < 0:
            raise SpecError("beta must be >= 0")
        if self.T < 31 - self.lag:
            raise SpecError(f"T must be at least {31 - self.lag}")


INJECTED_ID = "synthetic__injected"


def _rectified_ar1(rng: np.random.Generator, n: int, rho: float, burn: int = 100) -> np.ndarray:
    eps = rng.standard_normal(n + burn) * math.sqrt(1.0 - rho * rho)
    x = np.empty(n + burn)
    x[0] = eps[0] / math.sqrt(1.0 - rho * rho)
    for t in range(1, n + burn):
        x[t] = rho * x[t - 1] + eps[t]
    return np.maximum(x[burn:], 0.0)


def generate_synthetic(spec: SyntheticSpec) -> tuple[DailySeries, SignalCatalog]:
    """GT ~ Poisson(mu + beta * s[t + lag]) driven by a rectified AR(1) signal s.

    The catalog holds ``s`` (id ``synthetic__injected``) plus independent
    rectified AR(1) noise signals over the same days.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lead = -spec.lag
    latent = _rectified_ar1(rng, spec.T + lead, spec.rho)
    # latent[i] is day start_day - lead + i
    driver = latent[:spec.T]  # s[t + lag] for GT day t
    gt_vals = rng.poisson(spec.base_rate + spec.beta * driver).astype(float)
    injected = latent[lead:]
    entries = [SignalEntry(INJECTED_ID, Source.SYNTHETIC, "injected",
                           DailySeries(spec.start_day, np.round(injected, 6)))]
    for k in range(spec.n_noise_signals):
        noise = _rectified_ar1(rng, spec.T, spec.rho)
        entries.append(SignalEntry(f"synthetic__noise_{k:02d}", Source.SYNTHETIC, f"noise_{k:02d}",
                                   DailySeries(spec.start_day, np.round(noise, 6))))
    gt = DailySeries(spec.start_day, gt_vals, SeriesKind.EVENT_COUNT)
    return gt, SignalCatalog(tuple(entries))


# --------------------------------------------------------------------------
# report files
# --------------------------------------------------------------------------

def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    return path


def read_csv_rows(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_sweep_reports(out_dir: str | Path, result: SweepResult,
                        best_rows: list[dict] | None = None) -> dict[str, Path]:
    out_dir = Path(out_dir)
    paths = {
        "sweep": write_csv(out_dir / "sweep.csv", SWEEP_COLUMNS, result.rows),
        "periods": write_csv(out_dir / "periods.csv", PERIOD_COLUMNS, result.period_rows),
    }
    if best_rows is None:
        best_rows = best_signals([result.rows])
    paths["best_signals"] = write_csv(out_dir / "best_signals.csv", BEST_COLUMNS, best_rows)
    return paths


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def write_manifest(out_dir: str | Path, config: dict, seeds: dict, windows: list[dict],
                   extra: dict | None = None) -> Path:
    out = Path(out_dir) / "run_manifest.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": 1, "config_hash": config_hash(config), "config": config,
           "seeds": seeds, "windows": windows}
    if extra:
        doc.update(extra)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return out
