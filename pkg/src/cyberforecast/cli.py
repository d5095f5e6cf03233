"""Command-line entry point: synth, correlate, fit, forecast, backtest, sweep, report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import arima, baseline, harness, rnn
from .errors import ConfigError, DataError, ForecastError, ModelError, SpecError
from .evaluation import counts_to_warnings
from .series import (EventType, Schema, SignalCatalog, day_index, iso, load_catalog, read_series,
                     save_catalog, save_csv)
from .signals import rank_signals, write_rank_tables

logger = logging.getLogger("cyberforecast")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_MODEL = 0, 2, 3, 4


@dataclass
class RunConfig:
    gt_path: str = ""
    signal_dir: str = ""
    event_type: str = EventType.MALICIOUS_EMAIL.value
    target: str = "org"
    cadence: str = harness.Cadence.MONTHLY.value
    models: list[str] = field(default_factory=lambda: ["Arimax", "Gru"])
    signals: list[str] | None = None
    eval_start: str | None = None
    eval_end: str | None = None
    seed: int = 0
    jobs: int = 1
    top: int = 5
    out_dir: str = "out"
    settings: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version} (expected {SCHEMA_VERSION})")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data)

    # typed views --------------------------------------------------------

    def event(self) -> EventType:
        try:
            return EventType.parse(self.event_type)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def cad(self) -> harness.Cadence:
        try:
            return harness.Cadence.parse(self.cadence)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def model_kinds(self) -> list[harness.ModelKind]:
        try:
            return [harness.ModelKind.parse(m) for m in self.models]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def model_settings(self) -> harness.ModelSettings:
        try:
            return harness.ModelSettings.from_dict(self.settings)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad settings block: {exc}") from None

    def day(self, text: str | None) -> int | None:
        if text is None:
            return None
        try:
            return day_index(text)
        except ValueError:
            raise ConfigError(f"bad date {text!r}") from None

    def validate(self, need_gt: bool = True, need_signals: bool = False) -> None:
        if need_gt:
            if not self.gt_path:
                raise ConfigError("no ground-truth file given (gt_path / --gt)")
            if not Path(self.gt_path).is_file():
                raise ConfigError(f"ground-truth file {self.gt_path} does not exist")
        if need_signals:
            if not self.signal_dir:
                raise ConfigError("no signal directory given (signal_dir / --signals-dir)")
            if not Path(self.signal_dir).exists():
                raise ConfigError(f"signal directory {self.signal_dir} does not exist")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.top < 0:
            raise ConfigError("top must be >= 0")
        self.event(), self.cad(), self.model_kinds(), self.model_settings()


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def parse_lags(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"--lags expects a:b, got {text!r}") from None
    if lo > hi:
        raise ConfigError(f"--lags range {text!r} is empty")
    return lo, hi


def _join_negative_values(argv: Sequence[str]) -> list[str]:
    # argparse treats "-10:0" as an option; glue it onto --lags
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--lags":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--lags={nxt}")
        else:
            out.append(tok)
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its fields")
    p.add_argument("--gt", dest="gt_path", help="ground-truth CSV (date,value)")
    p.add_argument("--signals-dir", dest="signal_dir", help="directory of source__keyword.csv files")
    p.add_argument("--event-type", help="endpoint-malware | malicious-email | malicious-destination")
    p.add_argument("--target", help="organisation label")
    p.add_argument("--cadence", help="Monthly | Weekly")
    p.add_argument("--models", help="comma list, e.g. gru,arimax")
    p.add_argument("--signal", dest="signals", action="append", help="restrict to signal id (repeatable)")
    p.add_argument("--eval-start", help="first evaluation day (YYYY-MM-DD)")
    p.add_argument("--eval-end", help="last evaluation day (YYYY-MM-DD)")
    p.add_argument("--lags", help="lag range a:b (default -30:0)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--jobs", type=int, help="worker processes for sweeps")
    p.add_argument("--top", type=int, help="rows of the ranked table to print (default 5)")
    p.add_argument("--out", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cyberforecast",
                                     description="Forecast cyber-attack counts from external signals.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    p = sub.add_parser("synth", parents=[verbose], help="write a synthetic GT file and signal catalog")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=400)
    p.add_argument("--noise-signals", type=int, default=4)
    p.add_argument("--beta", type=float, default=8.0)
    p.add_argument("--base-rate", type=float, default=1.0)
    p.add_argument("--lag", type=int, default=-30)
    p.add_argument("--rho", type=float, default=0.95)
    p.add_argument("--start", default="2017-01-01")
    p.add_argument("--out", dest="out_dir", default="synthetic")

    for name, text in [("correlate", "rank signals by lagged correlation with GT"),
                       ("fit", "fit one model on all available data"),
                       ("forecast", "forecast the next calendar period"),
                       ("backtest", "rolling backtest of one model/signal cell"),
                       ("sweep", "backtest every model x signal cell and rank by lift")]:
        _common(sub.add_parser(name, parents=[verbose], help=text))

    p = sub.add_parser("report", parents=[verbose], help="rebuild best_signals.csv from sweep tables")
    p.add_argument("sweeps", nargs="+", help="sweep.csv files")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--out", dest="out_dir", default="report")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    cfg = RunConfig.from_dict(data)
    for name in ("gt_path", "signal_dir", "event_type", "target", "cadence", "signals",
                 "eval_start", "eval_end", "seed", "jobs", "top", "out_dir"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "models", None):
        cfg.models = [m.strip() for m in args.models.split(",") if m.strip()]
    if getattr(args, "lags", None):
        cfg.settings = {**cfg.settings, "lag_range": list(parse_lags(args.lags))}
    return cfg


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

def _load_gt(cfg: RunConfig):
    series, report = read_series(cfg.gt_path, Schema.GROUND_TRUTH)
    if report.filled_days:
        logger.info("GT: zero-filled %d day(s)", report.filled_days)
    return series


def _load_signals(cfg: RunConfig) -> SignalCatalog:
    if not cfg.signal_dir:
        return SignalCatalog(())
    catalog = load_catalog(cfg.signal_dir)
    if cfg.signals:
        try:
            catalog = catalog.subset(cfg.signals)
        except KeyError as exc:
            raise ConfigError(f"unknown signal id {exc.args[0]!r}") from None
    return catalog


def _eval_span(cfg: RunConfig, gt, settings: harness.ModelSettings) -> tuple[int, int]:
    start, end = cfg.day(cfg.eval_start), cfg.day(cfg.eval_end)
    if start is None or end is None:
        d_start, d_end = harness.default_eval_span(gt, cfg.cad(), settings.min_train_days)
        start = d_start if start is None else start
        end = d_end if end is None else end
    return start, end


def _manifest(cfg: RunConfig, command: str, windows: list[dict] | None = None,
              seeds: dict | None = None, extra: dict | None = None) -> Path:
    config = {"command": command, **cfg.to_dict()}
    return harness.write_manifest(cfg.out_dir, config, seeds or {"master_seed": cfg.seed},
                                  windows or [], extra)


def _print_rows(rows: list[dict], columns: Sequence[str], n: int) -> None:
    if n <= 0 or not rows:
        return
    print("\t".join(columns))
    for row in rows[:n]:
        print("\t".join(str(row.get(c, "")) for c in columns))


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        spec = harness.SyntheticSpec(seed=args.seed, T=args.days, base_rate=args.base_rate,
                                     beta=args.beta, lag=args.lag, n_noise_signals=args.noise_signals,
                                     rho=args.rho, start_day=day_index(args.start))
        gt, catalog = harness.generate_synthetic(spec)
    except (SpecError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(gt, out / "gt.csv")
    save_catalog(catalog, out / "signals")
    harness.write_manifest(out, {"command": "synth", **dataclasses.asdict(spec)}, {"seed": spec.seed},
                           [{"gt_start": iso(gt.start_day), "gt_end": iso(gt.end_day)}])
    print(f"wrote {out / 'gt.csv'} and {len(catalog)} signal files to {out / 'signals'}")
    return EXIT_OK


def cmd_correlate(cfg: RunConfig) -> int:
    cfg.validate(need_signals=True)
    gt = _load_gt(cfg)
    catalog = _load_signals(cfg)
    settings = cfg.model_settings()
    results = rank_signals(gt, catalog, settings.lag_range, settings.absolute_correlation)
    summary, per_lag = write_rank_tables(results, catalog, cfg.out_dir)
    _manifest(cfg, "correlate", [{"gt_start": iso(gt.start_day), "gt_end": iso(gt.end_day)}])
    rows = [{"signal_id": r.signal_id, "best_lag": r.best_lag, "best_r": f"{r.best_r:.4f}",
             "flagged": int(r.flagged)} for r in results]
    _print_rows(rows, ["signal_id", "best_lag", "best_r", "flagged"], cfg.top)
    logger.info("wrote %s and %s", summary, per_lag)
    return EXIT_OK


def _single_kind(cfg: RunConfig) -> harness.ModelKind:
    kinds = cfg.model_kinds()
    if len(kinds) != 1:
        raise ConfigError(f"this command takes exactly one model (--models), got {len(kinds)}")
    return kinds[0]


def _cell_signals(cfg: RunConfig, kind: harness.ModelKind, catalog: SignalCatalog) -> tuple[str, ...]:
    if not kind.uses_signals:
        return ()
    return tuple(cfg.signals) if cfg.signals else ()


def cmd_fit(cfg: RunConfig) -> int:
    cfg.validate()
    kind = _single_kind(cfg)
    gt = _load_gt(cfg)
    catalog = _load_signals(cfg)
    ids = _cell_signals(cfg, kind, catalog)
    settings = cfg.model_settings()
    # fitting on everything: a period right after the data with no gap
    period = harness.Period("fit", gt.end_day + 1, gt.end_day + 1, gt.end_day,
                            max([gt.end_day] + [catalog[s].series.end_day for s in ids]))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = harness.train_window(gt, period, settings)
    seed = harness.derive_seed(cfg.seed, "+".join(ids) or harness.ENDOGENOUS, kind.value)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", arima.ConvergenceWarning)
        if kind is harness.ModelKind.BASELINE:
            doc = dataclasses.asdict(baseline.fit_baseline(train, settings.baseline_window, seed))
            doc["type"] = "baseline"
        else:
            prepared = [harness.prepare_signal(catalog[s], train, period, settings) for s in ids]
            if prepared:
                train = train.window(max(p.series.start_day for p in prepared), train.end_day)
            exog = [p.series for p in prepared]
            if kind in (harness.ModelKind.ARIMA, harness.ModelKind.ARIMAX):
                grid = settings.arimax_grid if exog else settings.arima_grid
                best, table = arima.grid_search_audit(train, exog or None, grid)
                doc = best.to_dict()
                write_grid_table(out / "grid_audit.csv", table)
            else:
                r = settings.rnn
                rcfg = rnn.RnnConfig(cell=kind.value.upper(), input_dim=1 + len(exog),
                                     hidden_dim=r.hidden_dim, lookback=r.lookback, epochs=r.epochs,
                                     learning_rate=r.learning_rate, seed=seed,
                                     validation_fraction=r.validation_fraction,
                                     batch_size=r.batch_size)
                doc = rnn.train(rcfg, train, exog).to_dict()
            doc["lags"] = {s: p.lag for s, p in zip(ids, prepared)}
    doc["model_kind"] = kind.value
    doc["train_start"], doc["train_end"] = iso(train.start_day), iso(train.end_day)
    (out / "model.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _manifest(cfg, "fit", [{"train_start": iso(train.start_day), "train_end": iso(train.end_day)}],
              {"master_seed": cfg.seed, "model_seed": seed})
    print(f"wrote {out / 'model.json'}")
    return EXIT_OK


def write_grid_table(path: Path, table: list[arima.GridCell]) -> None:
    rows = [{"p": c.order.p, "d": c.order.d, "q": c.order.q,
             "aic": "" if c.aic is None else f"{c.aic:.6f}",
             "loglik": "" if c.loglik is None else f"{c.loglik:.6f}",
             "converged": int(c.converged), "error": c.error} for c in table]
    harness.write_csv(path, ["p", "d", "q", "aic", "loglik", "converged", "error"], rows)


def forecast_period_for(cfg: RunConfig, gt, catalog: SignalCatalog, ids: Sequence[str]) -> harness.Period:
    """Next full calendar period after the newest data, with the cadence's GT cutoff."""
    data_end = max([gt.end_day] + [catalog[s].series.end_day for s in ids])
    period = harness.next_period(cfg.cad(), data_end)
    return dataclasses.replace(period, gt_cutoff=min(period.gt_cutoff, gt.end_day),
                               signal_cutoff=min(period.signal_cutoff, data_end))


def cmd_forecast(cfg: RunConfig) -> int:
    cfg.validate()
    kind = _single_kind(cfg)
    gt = _load_gt(cfg)
    catalog = _load_signals(cfg)
    ids = _cell_signals(cfg, kind, catalog)
    settings = cfg.model_settings()
    period = forecast_period_for(cfg, gt, catalog, ids)
    logger.info("forecasting %s (%s..%s); GT through %s, gap %d day(s)", period.label,
                iso(period.start_day), iso(period.end_day), iso(period.gt_cutoff), period.gap_len)
    seed = harness.derive_seed(cfg.seed, "+".join(ids) or harness.ENDOGENOUS, kind.value)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", arima.ConvergenceWarning)
        fc, train, lags, filled = harness.forecast_period(kind, gt, catalog, ids, period, settings, seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(fc.with_values(fc.values), out / "forecast.csv")
    et = cfg.event()
    warns = counts_to_warnings(fc, et, cfg.target, f"{kind.value}:{'+'.join(ids) or harness.ENDOGENOUS}")
    harness.write_csv(out / "warnings.csv", ["date", "event_type", "target", "model_id"],
                      [{"date": iso(w.day), "event_type": w.event_type.value, "target": w.target,
                        "model_id": w.model_id} for w in warns])
    window = {"period": period.label, "start": iso(period.start_day), "end": iso(period.end_day),
              "train_start": iso(train.start_day), "train_end": iso(train.end_day),
              "signal_end": iso(period.signal_cutoff), "gap_len": period.gap_len,
              "horizon": period.horizon, "lags": list(lags), "exog_filled_days": filled}
    _manifest(cfg, "forecast", [window], {"master_seed": cfg.seed, "model_seed": seed})
    print(f"{period.label}: {period.horizon} day(s), gap {period.gap_len}, {len(warns)} warning(s)")
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    cfg.validate()
    kind = _single_kind(cfg)
    gt = _load_gt(cfg)
    catalog = _load_signals(cfg)
    ids = _cell_signals(cfg, kind, catalog)
    settings = cfg.model_settings()
    start, end = _eval_span(cfg, gt, settings)
    plan = harness.BacktestPlan(cfg.cad(), start, end, gt, catalog.subset(ids), cfg.event(),
                                cfg.target, kind, ids)
    seed = harness.derive_seed(cfg.seed, plan.signal_label, kind.value)
    report = harness.run_backtest(plan, settings, seed)
    et, cad = cfg.event(), cfg.cad()
    row = harness.sweep_row(report, catalog, et, cfg.target, cad)
    periods = harness.period_rows(report, et, cfg.target, cad)
    harness.write_csv(Path(cfg.out_dir) / "backtest.csv", harness.SWEEP_COLUMNS[1:], [row])
    harness.write_csv(Path(cfg.out_dir) / "periods.csv", harness.PERIOD_COLUMNS, periods)
    _manifest(cfg, "backtest", _windows(periods), {"master_seed": cfg.seed, "cell_seed": seed},
              {"eval_start": iso(start), "eval_end": iso(end)})
    print(f"{kind.label} {plan.signal_label}: F1 {report.aggregate_f1:.4f} "
          f"(baseline {report.baseline_f1:.4f}), lift {report.lift_vs_baseline:.4f}")
    return EXIT_OK


def _windows(period_rows: list[dict]) -> list[dict]:
    keys = ("model", "signal_id", "period", "train_start", "train_end", "signal_end", "gap_len")
    return [{k: r[k] for k in keys} for r in period_rows]


def cmd_sweep(cfg: RunConfig) -> int:
    cfg.validate()
    gt = _load_gt(cfg)
    catalog = _load_signals(cfg)
    kinds = cfg.model_kinds()
    if any(k.uses_signals for k in kinds) and len(catalog) == 0:
        raise DataError("sweep needs a non-empty signal catalog (--signals-dir)")
    settings = cfg.model_settings()
    start, end = _eval_span(cfg, gt, settings)
    result = harness.sweep(gt, catalog, cfg.event(), cfg.target, kinds, cfg.cad(), start, end,
                           settings, cfg.seed, cfg.jobs)
    harness.write_sweep_reports(cfg.out_dir, result)
    seeds = {"master_seed": cfg.seed}
    seeds.update({f"{r['model']}:{r['signal_id']}": harness.derive_seed(
        cfg.seed, r["signal_id"], harness.ModelKind.parse(_kind_name(r["model"])).value)
        for r in result.rows})
    _manifest(cfg, "sweep", _windows(result.period_rows), seeds,
              {"eval_start": iso(start), "eval_end": iso(end)})
    _print_rows(result.top(cfg.top), ["rank", "model", "signal_id", "f1", "baseline_f1", "lift"], cfg.top)
    return EXIT_OK


def _kind_name(label: str) -> str:
    for k in harness.ModelKind:
        if k.label == label:
            return k.value
    return label


def cmd_report(args) -> int:
    tables = []
    for p in args.sweeps:
        if not Path(p).is_file():
            raise ConfigError(f"sweep table {p} does not exist")
        tables.append(harness.read_csv_rows(p))
    rows = harness.best_signals(tables)
    out = Path(args.out_dir)
    harness.write_csv(out / "best_signals.csv", harness.BEST_COLUMNS, rows)
    harness.write_manifest(out, {"command": "report", "sweeps": list(args.sweeps)}, {}, [])
    _print_rows(rows, harness.BEST_COLUMNS, max(args.top, len(rows)))
    for p, t in zip(args.sweeps, tables):
        print(f"\ntop {args.top} of {p}")
        _print_rows(t, ["rank", "model", "signal_id", "f1", "lift"], args.top)
    return EXIT_OK


COMMANDS = {"correlate": cmd_correlate, "fit": cmd_fit, "forecast": cmd_forecast,
            "backtest": cmd_backtest, "sweep": cmd_sweep}


def main(argv: Sequence[str] | None = None) -> int:
    argv = _join_negative_values(sys.argv[1:] if argv is None else list(argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "report":
            return cmd_report(args)
        return COMMANDS[args.command](load_config(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SpecError, KeyError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ForecastError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
