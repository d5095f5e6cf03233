"""ARIMA / ARIMAX fitting by conditional Gaussian likelihood, AIC grid search, gap-aware forecasts."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import (AllFailedError, CoverageError, DimensionError, ModelError,
                     NonFiniteError, TooShortError)
from .optim import LbfgsConfig, lbfgs_minimize
from .series import DailySeries, difference, iso, trailing_anchors, integrate_values

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
# sigma^2 = SIGMA2_FLOOR + exp(s); keeps the likelihood bounded on constant data
SIGMA2_FLOOR = 1e-8


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, order=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        if min(self.p, self.d, self.q) < 0:
            raise ValueError(f"orders must be non-negative, got {self}")

    @property
    def pure_noise(self) -> bool:
        return self.p == 0 and self.q == 0

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})"


@dataclass(frozen=True)
class GridConfig:
    p_max: int = 5
    d_max: int = 2
    q_max: int = 5

    def orders(self) -> list[ArimaOrder]:
        return [ArimaOrder(p, d, q)
                for p in range(self.p_max + 1)
                for d in range(self.d_max + 1)
                for q in range(self.q_max + 1)]


ARIMA_GRID = GridConfig(5, 2, 5)
ARIMAX_GRID = GridConfig(7, 2, 5)


@dataclass(frozen=True, eq=False)
class ArimaModel:
    order: ArimaOrder
    c: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    sigma2: float
    loglik: float
    aic: float
    n_obs: int
    exog_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exog_std: np.ndarray = field(default_factory=lambda: np.zeros(0))
    signal_ids: tuple[str, ...] = ()
    converged: bool = True
    message: str = ""

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "exog_mean", "exog_std"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.alpha.size != self.order.p or self.beta.size != self.order.q:
            raise DimensionError("coefficient lengths do not match the order")
        if not (self.exog_mean.size == self.exog_std.size == self.gamma.size):
            raise DimensionError("gamma and exogenous scaling stats must have equal length")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def k(self) -> int:
        return self.order.p + self.order.q + self.gamma.size + 2

    @property
    def n_exog(self) -> int:
        return self.gamma.size

    @property
    def gamma_raw(self) -> np.ndarray:
        """Exogenous coefficients in the signals' original units."""
        return self.gamma / self.exog_std

    def params(self) -> np.ndarray:
        return pack_params(self.c, self.alpha, self.beta, self.gamma, self.sigma2)

    def to_dict(self) -> dict:
        return {
            "type": "arima",
            "order": [self.order.p, self.order.d, self.order.q],
            "c": self.c,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": self.gamma.tolist(),
            "sigma2": self.sigma2,
            "loglik": self.loglik,
            "aic": self.aic,
            "n_obs": self.n_obs,
            "exog_mean": self.exog_mean.tolist(),
            "exog_std": self.exog_std.tolist(),
            "signal_ids": list(self.signal_ids),
            "converged": self.converged,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArimaModel":
        return cls(order=ArimaOrder(*data["order"]), c=data["c"], alpha=data["alpha"],
                   beta=data["beta"], gamma=data["gamma"], sigma2=data["sigma2"],
                   loglik=data["loglik"], aic=data["aic"], n_obs=data["n_obs"],
                   exog_mean=data.get("exog_mean", []), exog_std=data.get("exog_std", []),
                   signal_ids=tuple(data.get("signal_ids", ())),
                   converged=data.get("converged", True), message=data.get("message", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ArimaModel":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ArimaModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def pack_params(c, alpha, beta, gamma, sigma2) -> np.ndarray:
    s = math.log(max(sigma2 - SIGMA2_FLOOR, 1e-300))
    return np.concatenate([[c], np.ravel(alpha), np.ravel(beta), np.ravel(gamma), [s]]).astype(float)


def unpack_params(params, p: int, q: int, k: int):
    params = np.asarray(params, dtype=np.float64)
    if params.size != 1 + p + q + k + 1:
        raise DimensionError(f"expected {2 + p + q + k} parameters, got {params.size}")
    c = params[0]
    alpha = params[1:1 + p]
    beta = params[1 + p:1 + p + q]
    gamma = params[1 + p + q:1 + p + q + k]
    s = params[-1]
    return c, alpha, beta, gamma, s


def _exog_matrix(exog, first: int, last: int) -> np.ndarray:
    """Stack exogenous series into a (days x K) matrix for days first..last."""
    if exog is None:
        return np.zeros((last - first + 1, 0))
    if isinstance(exog, np.ndarray):
        return exog.reshape(exog.shape[0], -1)
    cols = []
    for s in exog:
        if not s.covers(first, last):
            raise CoverageError(f"exogenous series {s!r} does not cover {iso(first)}..{iso(last)}")
        cols.append(s.values_for(first, last))
    if not cols:
        return np.zeros((last - first + 1, 0))
    return np.column_stack(cols)


class _Css:
    """Conditional likelihood of a differenced series for a fixed (p, q, K)."""

    def __init__(self, y: np.ndarray, X: np.ndarray, p: int, q: int, condition: int | None = None):
        self.y = np.asarray(y, dtype=np.float64)
        self.X = X
        self.p, self.q, self.k = p, q, X.shape[1]
        n = self.y.size
        cond = p if condition is None else condition
        if cond < p:
            raise ValueError("must condition on at least p observations")
        if n <= max(cond, q):
            raise TooShortError(f"need more than {max(cond, q)} observations, got {n}")
        self.m = n - cond
        # lagged design for the conditioned sample t = cond..n-1
        self.Ylag = (np.column_stack([self.y[cond - i:n - i] for i in range(1, p + 1)])
                     if p else np.zeros((self.m, 0)))
        self.target = self.y[cond:]
        self.Xs = self.X[cond:]

    def residuals(self, params) -> np.ndarray:
        c, alpha, beta, gamma, _ = unpack_params(params, self.p, self.q, self.k)
        w = self.target - c - self.Ylag @ alpha - self.Xs @ gamma
        if self.q:
            with np.errstate(all="ignore"):
                return lfilter([1.0], np.concatenate([[1.0], beta]), w)
        return w

    def nll(self, params) -> float:
        e = self.residuals(params)
        s = float(np.asarray(params)[-1])
        with np.errstate(over="ignore"):
            sigma2 = SIGMA2_FLOOR + math.exp(s) if s < 700 else math.inf
        if not np.all(np.isfinite(e)) or not math.isfinite(sigma2):
            raise NonFiniteError("residual recursion produced non-finite values")
        return 0.5 * (float(e @ e) / sigma2 + self.m * (math.log(sigma2) + LOG_2PI))

    def nll_and_grad(self, params) -> tuple[float, np.ndarray]:
        """Value and analytic gradient; each residual derivative is itself a filter."""
        params = np.asarray(params, dtype=np.float64)
        c, alpha, beta, gamma, s = unpack_params(params, self.p, self.q, self.k)
        e = self.residuals(params)
        if s > 300 or not np.all(np.isfinite(e)):
            return math.inf, np.full(params.size, np.nan)
        es = math.exp(s)
        sigma2 = SIGMA2_FLOOR + es

        # d w / d theta for (c, alpha, gamma); d e / d beta_j uses lagged residuals
        m = self.m
        cols = [np.full(m, -1.0)]
        cols.extend(-self.Ylag[:, i] for i in range(self.p))
        for j in range(1, self.q + 1):
            lagged = np.zeros(m)
            lagged[j:] = e[:-j] if j < m else 0.0
            cols.append(-lagged)
        cols.extend(-self.Xs[:, k] for k in range(self.k))
        D = np.vstack(cols)
        with np.errstate(all="ignore"):
            if self.q:
                D = lfilter([1.0], np.concatenate([[1.0], beta]), D, axis=1)
            grad_e = D @ e / sigma2
            ee = float(e @ e)
            value = 0.5 * (ee / sigma2 + m * (math.log(sigma2) + LOG_2PI))
            grad_s = 0.5 * (-ee / sigma2 ** 2 + m / sigma2) * es
            grad = np.concatenate([grad_e, [grad_s]])
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            return math.inf, np.full(params.size, np.nan)
        return value, grad


def _pacf_to_poly(u: np.ndarray, sign: float) -> np.ndarray:
    """Map unconstrained values to a stationary AR (sign=-1) or invertible MA (sign=+1) polynomial."""
    r = np.tanh(u / 2.0)
    out = r.copy()
    tmp = r.copy()
    for j in range(1, r.size):
        a = out[j]
        for k in range(j):
            tmp[k] = out[k] + sign * a * out[j - k - 1]
        out[:j] = tmp[:j]
    return out


def _poly_to_pacf(coefs: np.ndarray, sign: float) -> np.ndarray:
    out = np.asarray(coefs, dtype=np.float64).copy()
    tmp = out.copy()
    for j in range(out.size - 1, 0, -1):
        a = out[j]
        for k in range(j):
            tmp[k] = (out[k] - sign * a * out[j - k - 1]) / (1.0 - a * a)
        out[:j] = tmp[:j]
    with np.errstate(divide="ignore"):
        return 2.0 * np.arctanh(np.clip(out, -1 + 1e-12, 1 - 1e-12))


class _Reparam:
    """Unconstrained optimizer coordinates for (c, alpha, beta, gamma, s)."""

    def __init__(self, p: int, q: int):
        self.p, self.q = p, q

    def forward(self, u: np.ndarray) -> np.ndarray:
        theta = u.copy()
        p, q = self.p, self.q
        if p:
            theta[1:1 + p] = _pacf_to_poly(u[1:1 + p], -1.0)
        if q:
            theta[1 + p:1 + p + q] = _pacf_to_poly(u[1 + p:1 + p + q], 1.0)
        return theta

    def inverse(self, theta: np.ndarray) -> np.ndarray:
        u = np.asarray(theta, dtype=np.float64).copy()
        p, q = self.p, self.q
        if p:
            u[1:1 + p] = _poly_to_pacf(theta[1:1 + p], -1.0)
        if q:
            u[1 + p:1 + p + q] = _poly_to_pacf(theta[1 + p:1 + p + q], 1.0)
        return u

    def pullback(self, u: np.ndarray, grad_theta: np.ndarray, h: float = 1e-7) -> np.ndarray:
        """Chain rule through the block transforms (Jacobian by central differences)."""
        g = grad_theta.copy()
        for lo, n, sign in ((1, self.p, -1.0), (1 + self.p, self.q, 1.0)):
            if not n:
                continue
            block = u[lo:lo + n]
            J = np.empty((n, n))
            for i in range(n):
                up, dn = block.copy(), block.copy()
                up[i] += h
                dn[i] -= h
                J[:, i] = (_pacf_to_poly(up, sign) - _pacf_to_poly(dn, sign)) / (2 * h)
            g[lo:lo + n] = J.T @ grad_theta[lo:lo + n]
        return g


def css_neg_loglik(params, y, exog=None, order: ArimaOrder | tuple[int, int] | None = None) -> float:
    """Negative conditional Gaussian log-likelihood of an already-differenced series.

    ``params`` is ``[c, alpha_1..p, beta_1..q, gamma_1..K, log(sigma2 - floor)]``.
    Pre-sample residuals are zero and the first ``p`` observations are conditioned on.
    ``order`` supplies ``(p, q)``; it may be omitted when there are no MA terms
    and the AR order can be read off the parameter count.
    """
    y_vals = y.values if isinstance(y, DailySeries) else np.asarray(y, dtype=np.float64)
    if isinstance(y, DailySeries):
        X = _exog_matrix(exog, y.start_day, y.end_day)
    else:
        X = _exog_matrix(exog, 0, y_vals.size - 1) if exog is not None else np.zeros((y_vals.size, 0))
    if order is None:
        p, q = np.asarray(params).size - 2 - X.shape[1], 0
    elif isinstance(order, ArimaOrder):
        p, q = order.p, order.q
    else:
        p, q = order
    return _Css(y_vals, X, p, q).nll(params)


def _zscore_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0) if X.shape[1] else np.zeros(0)
    std = X.std(axis=0) if X.shape[1] else np.zeros(0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def min_length(order: ArimaOrder, n_exog: int) -> int:
    return 3 * (order.p + order.q + n_exog) + 10


def fit(y: DailySeries, exog: Sequence[DailySeries] | None = None,
        order: ArimaOrder | tuple[int, int, int] = ArimaOrder(1, 0, 0),
        config: LbfgsConfig | None = None, skip: int = 0) -> ArimaModel:
    """Fit ARIMA(p,d,q), or ARIMAX when ``exog`` is given, by L-BFGS on the CSS likelihood.

    Exogenous series must cover every day of ``y``; they are z-scored over
    those days and enter the equation for the differenced series.  ``skip``
    conditions on that many extra leading observations beyond ``p`` so that
    likelihoods of different orders can cover the same days.
    """
    if not isinstance(order, ArimaOrder):
        order = ArimaOrder(*order)
    exog = list(exog or [])
    K = len(exog)
    if len(y) < min_length(order, K) or len(y) <= order.d + max(order.p, order.q):
        raise TooShortError(f"order {order} with {K} exogenous signal(s) needs "
                            f"{min_length(order, K)} observations, got {len(y)}")
    X_raw = _exog_matrix(exog, y.start_day, y.end_day)
    mean, std = _zscore_stats(X_raw)
    X = (X_raw - mean) / std
    yd = difference(y, order.d)
    Xd = X[order.d:]
    css = _Css(yd.values, Xd, order.p, order.q, order.p + skip)

    var = float(np.var(yd.values))
    x0 = np.concatenate([[float(np.mean(yd.values))], np.zeros(order.p + order.q + K),
                         [math.log(max(var, SIGMA2_FLOOR))]])
    scale = 1.0 / css.m
    reparam = _Reparam(order.p, order.q)

    def objective(u):
        theta = reparam.forward(u)
        v, g = css.nll_and_grad(theta)
        if not math.isfinite(v):
            return v, g
        return v * scale, reparam.pullback(u, g) * scale

    result = lbfgs_minimize(objective, reparam.inverse(x0), config)
    if not result.converged:
        warnings.warn(f"ARIMA{order} fit stopped without converging: {result.message}",
                      ConvergenceWarning, stacklevel=2)
    c, alpha, beta, gamma, s = unpack_params(reparam.forward(result.x), order.p, order.q, K)
    nll = result.f / scale
    loglik = -nll
    k = order.p + order.q + K + 2
    ids = tuple(getattr(s_, "signal_id", "") for s_ in exog)
    return ArimaModel(order=order, c=float(c), alpha=alpha.copy(), beta=beta.copy(),
                      gamma=gamma.copy(), sigma2=SIGMA2_FLOOR + math.exp(s), loglik=loglik,
                      aic=2 * k - 2 * loglik, n_obs=css.m, exog_mean=mean, exog_std=std,
                      signal_ids=ids, converged=result.converged, message=result.message)


@dataclass(frozen=True)
class GridCell:
    order: ArimaOrder
    aic: float | None
    loglik: float | None
    converged: bool
    error: str = ""
    model: ArimaModel | None = field(default=None, compare=False, repr=False)


def _tie_key(model: ArimaModel):
    o = model.order
    return (model.aic, o.p + o.q + o.d, (o.p, o.d, o.q))


def grid_search_audit(y: DailySeries, exog: Sequence[DailySeries] | None = None,
                      grid: GridConfig = ARIMA_GRID,
                      config: LbfgsConfig | None = None) -> tuple[ArimaModel, list[GridCell]]:
    """Fit every cell of the grid; return the minimum-AIC model and the per-cell table."""
    table: list[GridCell] = []
    best: ArimaModel | None = None
    for order in grid.orders():
        # every cell's likelihood covers days start + d_max + p_max onward
        skip = (grid.p_max - order.p) + (grid.d_max - order.d)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                model = fit(y, exog, order, config, skip=skip)
        except (TooShortError, NonFiniteError, ModelError) as exc:
            table.append(GridCell(order, None, None, False, f"{type(exc).__name__}: {exc}"))
            continue
        table.append(GridCell(order, model.aic, model.loglik, model.converged,
                              "" if model.converged else model.message, model))
        if not model.converged or not math.isfinite(model.aic):
            continue
        if best is None or _tie_key(model) < _tie_key(best):
            best = model
    if best is None:
        raise AllFailedError(f"no grid cell converged ({len(table)} attempted)")
    return best, table


def grid_search(y: DailySeries, exog: Sequence[DailySeries] | None = None,
                grid: GridConfig = ARIMA_GRID, config: LbfgsConfig | None = None) -> ArimaModel:
    return grid_search_audit(y, exog, grid, config)[0]


@dataclass(frozen=True)
class ForecastPath:
    """Full recursion output: gap estimates followed by the horizon, in levels."""
    start_day: int
    levels: np.ndarray
    gap_len: int

    @property
    def gap(self) -> np.ndarray:
        return self.levels[:self.gap_len]

    @property
    def horizon(self) -> np.ndarray:
        return self.levels[self.gap_len:]


def forecast_path(model: ArimaModel, y_observed: DailySeries,
                  exog_full: Sequence[DailySeries] | None = None,
                  gap_len: int = 0, horizon: int = 1) -> ForecastPath:
    """Unclamped recursive forecast over the gap and the horizon."""
    if gap_len < 0 or horizon < 1:
        raise ValueError("gap_len must be >= 0 and horizon >= 1")
    o = model.order
    K = model.n_exog
    steps = gap_len + horizon
    first_future = y_observed.end_day + 1
    last_future = y_observed.end_day + steps
    if K and (exog_full is None or len(exog_full) != K):
        raise CoverageError(f"model needs {K} exogenous series")

    yd = difference(y_observed, o.d) if len(y_observed) > o.d else None
    if yd is None or len(yd) < max(o.p, 1):
        raise TooShortError(f"need at least {o.p + o.d} observations to forecast")

    X_future = (_exog_matrix(exog_full, first_future, last_future) - model.exog_mean) / model.exog_std \
        if K else np.zeros((steps, 0))

    if o.q:
        X_obs = (_exog_matrix(exog_full, yd.start_day, yd.end_day) - model.exog_mean) / model.exog_std \
            if K else np.zeros((len(yd), 0))
        if len(yd) > max(o.p, o.q):
            e_hist = _Css(yd.values, X_obs, o.p, o.q).residuals(model.params())
        else:
            e_hist = np.zeros(len(yd))
        e = list(e_hist[-o.q:]) if e_hist.size else []
        e = [0.0] * (o.q - len(e)) + e
    else:
        e = []
    hist = list(yd.values[-o.p:]) if o.p else []

    alpha, beta, gamma = model.alpha, model.beta, model.gamma
    out = np.empty(steps)
    for h in range(steps):
        val = model.c
        for i in range(o.p):
            val += alpha[i] * hist[-1 - i]
        for j in range(o.q):
            val += beta[j] * e[-1 - j]
        if K:
            val += float(X_future[h] @ gamma)
        out[h] = val
        if o.p:
            hist.append(val)
        if o.q:
            e.append(0.0)
    if o.d:
        out = integrate_values(out, trailing_anchors(y_observed, o.d), o.d)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("forecast recursion diverged")
    return ForecastPath(first_future, out, gap_len)


def forecast(model: ArimaModel, y_observed: DailySeries,
             exog_full: Sequence[DailySeries] | None = None,
             gap_len: int = 0, horizon: int = 1) -> DailySeries:
    """Recursive multistep forecast of the ``horizon`` days after a ``gap_len``-day gap.

    Gap days are forecast first and fed back as lagged values.  Output is in
    levels, clamped at zero after integration.
    """
    path = forecast_path(model, y_observed, exog_full, gap_len, horizon)
    return DailySeries(path.start_day + gap_len, np.maximum(path.horizon, 0.0))
