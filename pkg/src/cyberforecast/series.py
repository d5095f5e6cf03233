"""Daily series carrier, calendar arithmetic, differencing and CSV I/O."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import LengthError, OrderError, ParseError, DataError

logger = logging.getLogger(__name__)

EPOCH = dt.date(1970, 1, 1)
_EPOCH_ORDINAL = EPOCH.toordinal()


# --------------------------------------------------------------------------
# calendar
# --------------------------------------------------------------------------

def day_index(date: dt.date | str) -> int:
    """Days since 1970-01-01 for a date or an ISO ``YYYY-MM-DD`` string."""
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    return date.toordinal() - _EPOCH_ORDINAL


def to_date(day: int) -> dt.date:
    return dt.date.fromordinal(int(day) + _EPOCH_ORDINAL)


def iso(day: int) -> str:
    return to_date(day).isoformat()


def month_start(day: int) -> int:
    d = to_date(day)
    return day_index(d.replace(day=1))


def next_month_start(day: int) -> int:
    d = to_date(day)
    if d.month == 12:
        return day_index(dt.date(d.year + 1, 1, 1))
    return day_index(dt.date(d.year, d.month + 1, 1))


def prev_month_start(day: int) -> int:
    return month_start(month_start(day) - 1)


def days_in_month(day: int) -> int:
    return next_month_start(day) - month_start(day)


def week_start(day: int) -> int:
    """Monday of the ISO week containing ``day``."""
    return int(day) - to_date(day).weekday()


# --------------------------------------------------------------------------
# types
# --------------------------------------------------------------------------

class SeriesKind(str, enum.Enum):
    EVENT_COUNT = "EventCount"
    SIGNAL_VALUE = "SignalValue"


class EventType(str, enum.Enum):
    ENDPOINT_MALWARE = "endpoint-malware"
    MALICIOUS_EMAIL = "malicious-email"
    MALICIOUS_DESTINATION = "malicious-destination"

    @property
    def match_window_days(self) -> float:
        return _MATCH_WINDOWS[self]

    @classmethod
    def parse(cls, text: str) -> "EventType":
        key = text.strip().lower().replace("_", "-")
        aliases = {
            "ep-malware": cls.ENDPOINT_MALWARE,
            "endpointmalware": cls.ENDPOINT_MALWARE,
            "mal-email": cls.MALICIOUS_EMAIL,
            "maliciousemail": cls.MALICIOUS_EMAIL,
            "mal-dest": cls.MALICIOUS_DESTINATION,
            "mal-dest.": cls.MALICIOUS_DESTINATION,
            "maliciousdestination": cls.MALICIOUS_DESTINATION,
        }
        if key in aliases:
            return aliases[key]
        return cls(key)


_MATCH_WINDOWS = {
    EventType.ENDPOINT_MALWARE: 0.875,
    EventType.MALICIOUS_EMAIL: 1.375,
    EventType.MALICIOUS_DESTINATION: 1.625,
}


class Source(str, enum.Enum):
    D2WEB = "D2Web"
    TWITTER = "Twitter"
    BLOGS = "Blogs"
    VULNERABILITY = "Vulnerability"
    HONEYPOT = "Honeypot"
    SYNTHETIC = "Synthetic"

    @classmethod
    def parse(cls, text: str) -> "Source":
        key = text.strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        aliases = {"vuln": cls.VULNERABILITY, "vulnerabilities": cls.VULNERABILITY,
                   "blog": cls.BLOGS, "honeypots": cls.HONEYPOT, "synth": cls.SYNTHETIC}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown signal source {text!r}")


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Dense daily values; ``values[i]`` belongs to day ``start_day + i``.

    The value array is read-only so instances can be shared freely.
    """

    start_day: int
    values: np.ndarray
    kind: SeriesKind = SeriesKind.SIGNAL_VALUE

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if arr.size == 0:
            raise LengthError("DailySeries must be non-empty")
        kind = SeriesKind(self.kind)
        if kind is SeriesKind.EVENT_COUNT:
            if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr != np.round(arr)):
                raise DataError("EventCount series must hold non-negative integer values")
        arr.setflags(write=False)
        object.__setattr__(self, "start_day", int(self.start_day))
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "kind", kind)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (self.start_day == other.start_day and self.kind == other.kind
                and np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return (f"DailySeries({iso(self.start_day)}..{iso(self.end_day)}, "
                f"n={len(self)}, kind={self.kind.value})")

    @property
    def end_day(self) -> int:
        """Last covered day (inclusive)."""
        return self.start_day + self.values.size - 1

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.end_day + 1)

    def covers(self, first: int, last: int) -> bool:
        return self.start_day <= first and last <= self.end_day

    def window(self, first: int, last: int) -> "DailySeries":
        """Sub-series over days ``first..last`` inclusive, clipped to coverage."""
        lo = max(first, self.start_day)
        hi = min(last, self.end_day)
        if hi < lo:
            raise LengthError(f"no overlap between {iso(self.start_day)}..{iso(self.end_day)} "
                              f"and {iso(first)}..{iso(last)}")
        return self.with_values(self.values[lo - self.start_day: hi - self.start_day + 1], lo)

    def values_for(self, first: int, last: int) -> np.ndarray:
        """Values for days ``first..last``; raises unless fully covered."""
        if not self.covers(first, last):
            raise LengthError(f"series does not cover {iso(first)}..{iso(last)}")
        return self.values[first - self.start_day: last - self.start_day + 1]

    def with_values(self, values, start_day: int | None = None, kind: SeriesKind | None = None) -> "DailySeries":
        return DailySeries(self.start_day if start_day is None else start_day, values,
                           self.kind if kind is None else kind)

    def as_signal(self) -> "DailySeries":
        return DailySeries(self.start_day, self.values, SeriesKind.SIGNAL_VALUE)


@dataclass(frozen=True)
class SignalEntry:
    signal_id: str
    source: Source
    keyword: str
    series: DailySeries


@dataclass(frozen=True)
class SignalCatalog:
    entries: tuple[SignalEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.signal_id for e in entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate signal ids in catalog: {dupes}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, signal_id: str) -> SignalEntry:
        for e in self.entries:
            if e.signal_id == signal_id:
                return e
        raise KeyError(signal_id)

    @property
    def ids(self) -> list[str]:
        return [e.signal_id for e in self.entries]

    def subset(self, signal_ids: Iterable[str]) -> "SignalCatalog":
        return SignalCatalog(tuple(self[s] for s in signal_ids))


# --------------------------------------------------------------------------
# differencing
# --------------------------------------------------------------------------

def difference(s: DailySeries, d: int) -> DailySeries:
    """Apply ``d`` first-difference passes; start_day advances by ``d``."""
    if d < 0:
        raise ValueError("d must be non-negative")
    if len(s) <= d:
        raise LengthError(f"cannot difference a length-{len(s)} series {d} times")
    if d == 0:
        return DailySeries(s.start_day, s.values, s.kind)
    return DailySeries(s.start_day + d, np.diff(s.values, n=d), SeriesKind.SIGNAL_VALUE)


def _stack(values: np.ndarray, d: int) -> list[np.ndarray]:
    levels = [np.asarray(values, dtype=np.float64)]
    for _ in range(d):
        levels.append(np.diff(levels[-1]))
    return levels


def leading_anchors(s: DailySeries, d: int) -> list[float]:
    """Anchors preceding ``difference(s, d)``: ``[level, Δ, ..., Δ^(d-1)]`` at day start+d-1."""
    if len(s) <= d:
        raise LengthError(f"series too short for d={d}")
    levels = _stack(s.values, d)
    return [float(levels[k][d - 1 - k]) for k in range(d)]


def trailing_anchors(s: DailySeries, d: int) -> list[float]:
    """Anchors at the series end, for integrating a forecast continuing ``s``."""
    if len(s) <= d - 1 or len(s) == 0:
        raise LengthError(f"series too short for d={d}")
    levels = _stack(s.values, d)
    return [float(levels[k][-1]) for k in range(d)]


def integrate_values(diffs: np.ndarray, anchors: Sequence[float], d: int) -> np.ndarray:
    if len(anchors) != d:
        raise LengthError(f"expected {d} anchors, got {len(anchors)}")
    out = np.asarray(diffs, dtype=np.float64)
    for k in range(d - 1, -1, -1):
        out = anchors[k] + np.cumsum(out)
    return out


def integrate(diffs: DailySeries, anchors: Sequence[float], d: int) -> DailySeries:
    """Inverse of :func:`difference` given the ``d`` preceding anchor values.

    ``anchors[k]`` is the k-th difference level on the day before ``diffs`` starts.
    """
    if d < 0:
        raise ValueError("d must be non-negative")
    if d == 0:
        if len(anchors) != 0:
            raise LengthError(f"expected 0 anchors, got {len(anchors)}")
        return DailySeries(diffs.start_day, diffs.values, diffs.kind)
    return DailySeries(diffs.start_day, integrate_values(diffs.values, anchors, d),
                       SeriesKind.SIGNAL_VALUE)


def shift(s: DailySeries, lag: int) -> DailySeries:
    """Move ``s`` in calendar time by ``-lag`` days.

    With ``lag = -3`` the value observed on day t is reported on day t+3, so a
    signal that leads a target by three days lines up with it.
    """
    if abs(lag) >= len(s):
        raise LengthError(f"|lag|={abs(lag)} must be shorter than the series ({len(s)})")
    if lag == 0:
        return s
    return DailySeries(s.start_day - lag, s.values, s.kind)


# --------------------------------------------------------------------------
# CSV I/O
# --------------------------------------------------------------------------

class Schema(str, enum.Enum):
    GROUND_TRUTH = "GroundTruth"
    SIGNAL = "Signal"


@dataclass(frozen=True)
class LoadReport:
    path: str
    rows: int
    filled_days: int

    @property
    def fill_fraction(self) -> float:
        total = self.rows + self.filled_days
        return self.filled_days / total if total else 0.0


def format_value(v: float) -> str:
    if math.isfinite(v) and v == int(v):
        return str(int(v))
    return repr(float(v))


def _parse_rows(text: str, path: str) -> list[tuple[int, int, float]]:
    rows = []
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ParseError("empty file", 1, path)
    if [h.strip().lower() for h in header] != ["date", "value"]:
        raise ParseError(f"expected header 'date,value', got {','.join(header)!r}", 1, path)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", lineno, path)
        try:
            day = day_index(row[0].strip())
        except ValueError:
            raise ParseError(f"bad date {row[0]!r}", lineno, path) from None
        try:
            value = float(row[1])
        except ValueError:
            raise ParseError(f"bad value {row[1]!r}", lineno, path) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value {row[1]!r}", lineno, path)
        rows.append((lineno, day, value))
    if not rows:
        raise ParseError("no data rows", None, path)
    return rows


def read_series(path: str | Path, schema: Schema | str = Schema.SIGNAL,
                sort: bool = True) -> tuple[DailySeries, LoadReport]:
    """Read one ``date,value`` file into a dense series plus a gap-fill report."""
    path = Path(path)
    schema = Schema(schema)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = _parse_rows(text, str(path))

    if sort:
        rows.sort(key=lambda r: r[1])
    else:
        for (_, prev, _), (lineno, day, _) in zip(rows, rows[1:]):
            if day <= prev:
                raise OrderError(f"{path}:{lineno}: date {iso(day)} not after {iso(prev)}")
    for (_, prev, _), (lineno, day, _) in zip(rows, rows[1:]):
        if day == prev:
            raise OrderError(f"{path}:{lineno}: duplicate date {iso(day)}")

    start, end = rows[0][1], rows[-1][1]
    values = np.zeros(end - start + 1)
    for lineno, day, value in rows:
        values[day - start] = value
    kind = SeriesKind.EVENT_COUNT if schema is Schema.GROUND_TRUTH else SeriesKind.SIGNAL_VALUE
    if kind is SeriesKind.EVENT_COUNT:
        for lineno, _, value in rows:
            if value < 0 or value != int(value):
                raise ParseError(f"event count must be a non-negative integer, got {value}",
                                 lineno, str(path))
    report = LoadReport(str(path), len(rows), values.size - len(rows))
    if report.filled_days:
        logger.info("%s: zero-filled %d missing day(s)", path, report.filled_days)
    return DailySeries(start, values, kind), report


def signal_id_parts(stem: str) -> tuple[Source, str]:
    if "__" not in stem:
        raise ParseError(f"signal file name {stem!r} must look like source__keyword")
    source, keyword = stem.split("__", 1)
    try:
        return Source.parse(source), keyword
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def load_catalog(directory: str | Path) -> SignalCatalog:
    """Read every ``source__keyword.csv`` in ``directory``; signal_id is the file stem."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"signal directory {directory} does not exist")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataError(f"signal directory {directory} contains no .csv files")
    entries = []
    for f in files:
        source, keyword = signal_id_parts(f.stem)
        series, _ = read_series(f, Schema.SIGNAL)
        entries.append(SignalEntry(f.stem, source, keyword, series))
    return SignalCatalog(tuple(entries))


def load_csv(path: str | Path, schema: Schema | str = Schema.SIGNAL,
             sort: bool = True) -> DailySeries | SignalCatalog:
    """Load a ground-truth or signal file; a directory with Signal schema yields a catalog."""
    path = Path(path)
    schema = Schema(schema)
    if schema is Schema.SIGNAL and path.is_dir():
        return load_catalog(path)
    return read_series(path, schema, sort)[0]


def dumps_csv(s: DailySeries) -> str:
    lines = ["date,value"]
    lines.extend(f"{iso(s.start_day + i)},{format_value(v)}" for i, v in enumerate(s.values))
    return "\n".join(lines) + "\n"


def save_csv(s: DailySeries, path: str | Path) -> None:
    Path(path).write_text(dumps_csv(s), encoding="utf-8")


def save_catalog(catalog: SignalCatalog, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for e in catalog:
        p = directory / f"{e.signal_id}.csv"
        save_csv(e.series, p)
        written.append(p)
    return written


def signal_id_for(source: Source, keyword: str) -> str:
    return f"{source.value.lower()}__{keyword}"
