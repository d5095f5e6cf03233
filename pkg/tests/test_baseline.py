import numpy as np
import pytest

from cyberforecast.baseline import BaselineModel, baseline_forecast, baseline_rate, fit_baseline
from cyberforecast.errors import EmptyError

from conftest import counts


def test_rate_is_trailing_mean():
    r = baseline_rate(counts([9, 9, 2, 4, 6]), 3)
    assert r.value == 4.0 and r.used == 3 and not r.short_window


def test_rate_all_zero():
    assert baseline_rate(counts([0, 0, 0]), 2).value == 0.0


def test_rate_short_window_flag():
    r = baseline_rate(counts([3, 5]), 10)
    assert r.value == 4.0 and r.short_window and r.used == 2


def test_rate_empty_history():
    with pytest.raises(EmptyError):
        baseline_rate(None, 3)


def test_fit_defaults_to_whole_history():
    m = fit_baseline(counts([1, 2, 3, 6]))
    assert m.window == 4 and m.lam == 3.0


def test_point_forecast():
    f = baseline_forecast(BaselineModel(3, 4.0), 3, "Point", start_day=10)
    assert list(f.values) == [4, 4, 4] and f.start_day == 10


def test_point_forecast_rounds_half_even():
    assert baseline_forecast(BaselineModel(3, 2.5), 1).values[0] == 2
    assert baseline_forecast(BaselineModel(3, 3.5), 1).values[0] == 4


def test_sample_zero_rate():
    assert np.all(baseline_forecast(BaselineModel(3, 0.0), 50, "Sample").values == 0)


def test_sample_mean_and_seed():
    m = BaselineModel(3, 4.0, seed=11)
    f = baseline_forecast(m, 10_000, "Sample")
    assert abs(f.values.mean() - 4.0) < 0.1
    assert f == baseline_forecast(m, 10_000, "Sample")


def test_invalid_inputs():
    with pytest.raises(ValueError):
        BaselineModel(0, 1.0)
    with pytest.raises(ValueError):
        BaselineModel(1, -1.0)
    with pytest.raises(ValueError):
        baseline_forecast(BaselineModel(1, 1.0), 0)
