import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cyberforecast.errors import DataError, LengthError, OrderError, ParseError
from cyberforecast.series import (DailySeries, EventType, SeriesKind, SignalCatalog, SignalEntry,
                                  Source, day_index, days_in_month, difference, dumps_csv, integrate,
                                  iso, leading_anchors, load_catalog, load_csv, month_start,
                                  next_month_start, prev_month_start, read_series, save_catalog,
                                  save_csv, shift, to_date, week_start)
from cyberforecast.signals import pearson


def s(values, start=0, kind=SeriesKind.SIGNAL_VALUE):
    return DailySeries(start, np.asarray(values, dtype=float), kind)


# ---------------------------------------------------------------- calendar

def test_day_index_epoch_arithmetic():
    assert day_index("1970-01-01") == 0
    assert day_index("2017-07-01") == 17348
    assert day_index("2017-07-01") == (dt.date(2017, 7, 1) - dt.date(1970, 1, 1)).days
    assert iso(17348) == "2017-07-01"
    assert to_date(17348) == dt.date(2017, 7, 1)


@given(st.dates(min_value=dt.date(1990, 1, 1), max_value=dt.date(2040, 12, 31)))
def test_calendar_helpers_match_datetime(date):
    d = day_index(date)
    assert to_date(month_start(d)) == date.replace(day=1)
    nxt = to_date(next_month_start(d))
    assert nxt.day == 1 and (nxt - date.replace(day=1)).days == days_in_month(d)
    prev = to_date(prev_month_start(d))
    assert prev.day == 1 and next_month_start(prev_month_start(d)) == month_start(d)
    ws = to_date(week_start(d))
    assert ws.weekday() == 0 and 0 <= (date - ws).days < 7


# ---------------------------------------------------------------- types

def test_event_type_windows_are_exact():
    assert EventType.ENDPOINT_MALWARE.match_window_days == 0.875
    assert EventType.MALICIOUS_EMAIL.match_window_days == 1.375
    assert EventType.MALICIOUS_DESTINATION.match_window_days == 1.625


def test_event_type_parse_aliases():
    assert EventType.parse("endpoint-malware") is EventType.ENDPOINT_MALWARE
    assert EventType.parse("EndpointMalware") is EventType.ENDPOINT_MALWARE
    assert EventType.parse("malicious-email") is EventType.MALICIOUS_EMAIL
    with pytest.raises(ValueError):
        EventType.parse("phishing-by-fax")


def test_daily_series_rejects_empty_and_bad_counts():
    with pytest.raises(LengthError):
        s([])
    with pytest.raises(DataError):
        s([1, 2.5], kind=SeriesKind.EVENT_COUNT)
    with pytest.raises(DataError):
        s([1, -1], kind=SeriesKind.EVENT_COUNT)
    assert s([0, 3], kind=SeriesKind.EVENT_COUNT).kind is SeriesKind.EVENT_COUNT


def test_daily_series_is_immutable():
    x = s([1, 2, 3])
    with pytest.raises(ValueError):
        x.values[0] = 5
    src = np.array([1.0, 2.0])
    y = s(src)
    src[0] = 99
    assert y.values[0] == 1.0


def test_window_and_values_for():
    x = s(np.arange(10), start=100)
    assert x.end_day == 109
    w = x.window(103, 105)
    assert w.start_day == 103 and list(w.values) == [3, 4, 5]
    assert list(x.window(90, 101).values) == [0, 1]
    with pytest.raises(LengthError):
        x.values_for(108, 111)


def test_catalog_ids_unique():
    e = SignalEntry("twitter__a", Source.TWITTER, "a", s([1, 2]))
    with pytest.raises(DataError):
        SignalCatalog((e, e))
    cat = SignalCatalog((e,))
    assert cat["twitter__a"] is e and cat.ids == ["twitter__a"]
    with pytest.raises(KeyError):
        cat["nope"]


# ---------------------------------------------------------------- differencing

def test_difference_examples():
    x = s([1, 3, 6, 10], start=5)
    d1 = difference(x, 1)
    assert list(d1.values) == [2, 3, 4] and d1.start_day == 6
    d2 = difference(x, 2)
    assert list(d2.values) == [1, 1] and d2.start_day == 7
    assert difference(x, 0) == x


def test_difference_too_short():
    with pytest.raises(LengthError):
        difference(s([1, 2]), 2)


def test_integrate_examples():
    out = integrate(s([2, 3, 4], start=1), [1.0], 1)
    assert list(out.values) == [3, 6, 10]
    diffs = s([2, 3, 4])
    assert integrate(diffs, [], 0) == diffs
    with pytest.raises(LengthError):
        integrate(diffs, [1.0, 2.0], 1)


@given(st.lists(st.integers(-1000, 1000), min_size=10, max_size=200), st.integers(0, 2))
def test_difference_integrate_roundtrip_exact_on_integers(vals, d):
    x = s(vals)
    back = integrate(difference(x, d), leading_anchors(x, d), d)
    assert back.start_day == x.start_day + d
    np.testing.assert_array_equal(back.values, x.values[d:])


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=10, max_size=200), st.integers(0, 2))
def test_difference_integrate_roundtrip_floats(vals, d):
    x = s(vals)
    back = integrate(difference(x, d), leading_anchors(x, d), d)
    np.testing.assert_allclose(back.values, x.values[d:], rtol=0, atol=1e-9)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=5, max_size=60), st.integers(0, 3))
def test_difference_shortens_by_d(vals, d):
    assert len(difference(s(vals), d)) == len(vals) - d


def test_random_length_50_roundtrip(rng):
    for d in (1, 2):
        x = s(rng.integers(0, 50, 50))
        back = integrate(difference(x, d), leading_anchors(x, d), d)
        np.testing.assert_array_equal(back.values, x.values[d:])


# ---------------------------------------------------------------- shift

def test_shift_overlap_with_target():
    x = s(np.arange(10), start=10)
    target_days = set(range(10, 20))
    shifted = shift(x, -3)
    overlap = sorted(target_days & set(range(shifted.start_day, shifted.end_day + 1)))
    assert overlap == list(range(13, 20))
    assert shift(x, 0) == x


def test_shift_errors():
    with pytest.raises(LengthError):
        shift(s([1, 2, 3]), -3)


def test_shift_then_correlate_with_unshifted_copy(rng):
    x = s(rng.normal(size=60), start=0)
    y = shift(x, -4)
    lo, hi = 4, x.end_day
    assert pearson(x.values_for(lo - 4, hi - 4), y.values_for(lo, hi)) == pytest.approx(1.0)


@given(st.lists(st.integers(0, 9), min_size=5, max_size=40), st.integers(-4, 0))
def test_shift_moves_each_value_by_lag(vals, lag):
    x = s(vals)
    y = shift(x, lag)
    assert sorted(y.values) == sorted(x.values)
    for day in range(y.start_day, y.end_day + 1):
        assert y.values_for(day, day)[0] == x.values_for(day + lag, day + lag)[0]


# ---------------------------------------------------------------- CSV

def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_two_rows(tmp_path):
    p = write(tmp_path, "gt.csv", "date,value\n2017-07-01,3\n2017-07-02,5\n")
    x = load_csv(p, "GroundTruth")
    assert x.start_day == 17348 and list(x.values) == [3, 5]
    assert x.kind is SeriesKind.EVENT_COUNT


def test_load_zero_fills_gaps(tmp_path):
    p = write(tmp_path, "gt.csv", "date,value\n2017-07-01,4\n2017-07-03,4\n")
    x, report = read_series(p, "GroundTruth")
    assert list(x.values) == [4, 0, 4]
    assert report.filled_days == 1 and report.rows == 2


def test_parse_error_names_line(tmp_path):
    p = write(tmp_path, "gt.csv", "date,value\n2017-07-01,4\n2017-07-02,abc\n")
    with pytest.raises(ParseError) as info:
        load_csv(p, "GroundTruth")
    assert info.value.line == 3
    assert ":3" in str(info.value)


def test_parse_error_bad_header_and_bad_date(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a.csv", "day,count\n2017-07-01,1\n"))
    with pytest.raises(ParseError) as info:
        load_csv(write(tmp_path, "b.csv", "date,value\n2017-13-01,1\n"))
    assert info.value.line == 2


def test_ground_truth_must_be_counts(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "gt.csv", "date,value\n2017-07-01,1.5\n"), "GroundTruth")


def test_order_error_without_sort(tmp_path):
    p = write(tmp_path, "x.csv", "date,value\n2017-07-02,1\n2017-07-01,2\n")
    with pytest.raises(OrderError):
        read_series(p, sort=False)
    x, _ = read_series(p)
    assert list(x.values) == [2, 1]


def test_duplicate_dates_rejected(tmp_path):
    with pytest.raises(OrderError):
        read_series(write(tmp_path, "x.csv", "date,value\n2017-07-01,1\n2017-07-01,2\n"))


def test_roundtrip_bytes(tmp_path):
    text = "date,value\n2017-07-01,3\n2017-07-02,0.25\n2017-07-03,1e-07\n2017-07-04,12\n"
    p = write(tmp_path, "x.csv", text)
    out = tmp_path / "y.csv"
    save_csv(load_csv(p), out)
    assert out.read_text(encoding="utf-8") == text


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_dumps_parse_roundtrip(vals):
    x = s(vals, start=day_index("2018-01-01"))
    import tempfile, pathlib
    with tempfile.TemporaryDirectory() as d:
        p = pathlib.Path(d) / "x.csv"
        p.write_text(dumps_csv(x), encoding="utf-8")
        assert load_csv(p) == x


def test_catalog_directory(tmp_path):
    e1 = SignalEntry("twitter__zero_day", Source.TWITTER, "zero_day", s([1, 2, 3], start=17000))
    e2 = SignalEntry("d2web__ransomware", Source.D2WEB, "ransomware", s([0, 5], start=17001))
    save_catalog(SignalCatalog((e1, e2)), tmp_path / "sig")
    cat = load_catalog(tmp_path / "sig")
    assert cat.ids == ["d2web__ransomware", "twitter__zero_day"]
    assert cat["twitter__zero_day"].source is Source.TWITTER
    assert cat["twitter__zero_day"].keyword == "zero_day"
    assert cat["d2web__ransomware"].series == e2.series


def test_catalog_errors_name_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataError, match="empty"):
        load_catalog(tmp_path / "empty")
    with pytest.raises(DataError, match="missing"):
        load_catalog(tmp_path / "missing")
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "nounderscore.csv").write_text("date,value\n2017-01-01,1\n")
    with pytest.raises(ParseError):
        load_catalog(tmp_path / "bad")
