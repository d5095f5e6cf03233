"""Forecasting daily cyber-attack counts with ARIMA/ARIMAX, GRU/LSTM and external signals."""

from .errors import (ConfigError, CoverageError, DataError, DegenerateError, ForecastError,
                     ModelError, ParseError)
from .series import DailySeries, EventType, SeriesKind, SignalCatalog, SignalEntry, Source

__version__ = "0.1.0"

__all__ = ["ConfigError", "CoverageError", "DailySeries", "DataError", "DegenerateError",
           "EventType", "ForecastError", "ModelError", "ParseError", "SeriesKind",
           "SignalCatalog", "SignalEntry", "Source", "__version__"]
