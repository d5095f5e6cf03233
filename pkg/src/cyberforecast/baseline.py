"""Poisson baseline: rate is the trailing mean of past event counts."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyError
from .series import DailySeries, SeriesKind


class Mode(str, enum.Enum):
    POINT = "Point"
    SAMPLE = "Sample"


@dataclass(frozen=True)
class BaselineModel:
    window: int
    lam: float
    seed: int = 0
    short_window: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not self.lam >= 0:
            raise ValueError("rate must be non-negative")


@dataclass(frozen=True)
class Rate:
    value: float
    used: int
    short_window: bool

    def __float__(self) -> float:
        return self.value


def baseline_rate(history: DailySeries, W: int) -> Rate:
    """Mean of the last ``min(W, len(history))`` days."""
    if history is None or len(history) == 0:
        raise EmptyError("baseline needs at least one day of history")
    if W < 1:
        raise ValueError("W must be >= 1")
    used = min(W, len(history))
    return Rate(float(np.mean(history.values[-used:])), used, used < W)


def fit_baseline(history: DailySeries, W: int | None = None, seed: int = 0) -> BaselineModel:
    """``W=None`` uses the whole training history as the window."""
    W = len(history) if W is None else W
    rate = baseline_rate(history, W)
    return BaselineModel(W, rate.value, seed, rate.short_window)


def baseline_forecast(model: BaselineModel, horizon: int, mode: Mode | str = Mode.POINT,
                      start_day: int = 0) -> DailySeries:
    """Point mode repeats round-half-even(lambda); Sample mode draws seeded Poisson variates."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mode = Mode(mode)
    if mode is Mode.POINT:
        values = np.full(horizon, max(0.0, float(np.round(model.lam))))
    else:
        values = np.random.default_rng(model.seed).poisson(model.lam, horizon).astype(float)
    return DailySeries(start_day, values, SeriesKind.EVENT_COUNT)
