"""GRU and LSTM count forecasters: forward passes, BPTT, Adam training, recursive prediction.

Parameters live in one flat float64 vector; the ``GruWeights`` / ``LstmWeights``
views slice it into named matrices so the optimizer sees a single array.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import CoverageError, DimensionError, TooShortError
from .optim import AdamState, adam_step
from .series import DailySeries, iso

logger = logging.getLogger(__name__)

INIT_SCALE = 0.08
PATIENCE = 10
# patience only applies after the first WARMUP epochs; validation loss often
# rises briefly while the net moves away from predicting the mean
WARMUP = 20


class Cell(str, enum.Enum):
    GRU = "GRU"
    LSTM = "LSTM"


@dataclass(frozen=True)
class RnnConfig:
    cell: Cell = Cell.GRU
    input_dim: int = 1
    hidden_dim: int = 16
    lookback: int = 7
    epochs: int = 200
    learning_rate: float = 1e-2
    seed: int = 0
    validation_fraction: float = 0.2
    batch_size: int = 0  # 0 = full batch

    def __post_init__(self):
        object.__setattr__(self, "cell", Cell(self.cell))
        if self.hidden_dim < 1 or self.lookback < 1 or self.input_dim < 1:
            raise ValueError("hidden_dim, lookback and input_dim must be >= 1")
        if not 0 <= self.validation_fraction < 0.5:
            raise ValueError("validation_fraction must lie in [0, 0.5)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def _layout(cell: Cell, n_in: int, n_h: int) -> list[tuple[str, tuple[int, ...]]]:
    if cell is Cell.GRU:
        return [("W_z", (n_h, n_in)), ("U_z", (n_h, n_h)), ("b_z", (n_h,)),
                ("W_r", (n_h, n_in)), ("U_r", (n_h, n_h)), ("b_r", (n_h,)),
                ("W", (n_h, n_h + n_in)), ("b_h", (n_h,)),
                ("W_out", (1, n_h)), ("b_out", (1,))]
    return [("W_f", (n_h, n_h + n_in)), ("b_f", (n_h,)),
            ("W_i", (n_h, n_h + n_in)), ("b_i", (n_h,)),
            ("W_o", (n_h, n_h + n_in)), ("b_o", (n_h,)),
            ("W_c", (n_h, n_h + n_in)), ("b_c", (n_h,)),
            ("W_out", (1, n_h)), ("b_out", (1,))]


def n_params(cell: Cell, n_in: int, n_h: int) -> int:
    return sum(math.prod(shape) for _, shape in _layout(Cell(cell), n_in, n_h))


class _Weights:
    cell: Cell

    def __init__(self, flat: np.ndarray, input_dim: int, hidden_dim: int):
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        expected = n_params(self.cell, input_dim, hidden_dim)
        if flat.size != expected:
            raise DimensionError(f"{self.cell.value} with input {input_dim}, hidden {hidden_dim} "
                                 f"needs {expected} parameters, got {flat.size}")
        self.flat = flat
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        offset = 0
        for name, shape in _layout(self.cell, input_dim, hidden_dim):
            size = math.prod(shape)
            setattr(self, name, flat[offset:offset + size].reshape(shape))
            offset += size

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int):
        return cls(np.zeros(n_params(cls.cell, input_dim, hidden_dim)), input_dim, hidden_dim)

    @classmethod
    def random(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator,
               scale: float = INIT_SCALE):
        size = n_params(cls.cell, input_dim, hidden_dim)
        return cls(rng.uniform(-scale, scale, size), input_dim, hidden_dim)

    def names(self) -> list[str]:
        return [name for name, _ in _layout(self.cell, self.input_dim, self.hidden_dim)]

    def copy(self):
        return type(self)(self.flat.copy(), self.input_dim, self.hidden_dim)


class GruWeights(_Weights):
    cell = Cell.GRU


class LstmWeights(_Weights):
    cell = Cell.LSTM


def weights_class(cell: Cell):
    return GruWeights if Cell(cell) is Cell.GRU else LstmWeights


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _check_inputs(w: _Weights, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[2] != w.input_dim:
        raise DimensionError(f"inputs must have shape (batch, steps, {w.input_dim}), got {X.shape}")
    return X


# --------------------------------------------------------------------------
# GRU
# --------------------------------------------------------------------------

def _gru_run(w: GruWeights, X: np.ndarray, h0: np.ndarray):
    B, L, _ = X.shape
    H = w.hidden_dim
    hs = np.empty((L + 1, B, H))
    hs[0] = h0
    cache = []
    Wh, Wx = w.W[:, :H], w.W[:, H:]
    for t in range(L):
        x, h = X[:, t], hs[t]
        z = _sigmoid(x @ w.W_z.T + h @ w.U_z.T + w.b_z)
        r = _sigmoid(x @ w.W_r.T + h @ w.U_r.T + w.b_r)
        hh = np.tanh((r * h) @ Wh.T + x @ Wx.T + w.b_h)
        hs[t + 1] = (1.0 - z) * h + z * hh
        cache.append((z, r, hh))
    pred = hs[L] @ w.W_out[0] + w.b_out[0]
    return hs, cache, pred


def gru_forward(weights: GruWeights, x_seq, h0=None) -> tuple[np.ndarray, float | np.ndarray]:
    """Run the GRU over ``x_seq`` (steps x input, or batch x steps x input).

    Returns the hidden states after each step and the affine readout of the
    last one.  For a single sequence the prediction is a float.
    """
    single = np.asarray(x_seq).ndim == 2
    X = _check_inputs(weights, x_seq)
    h0 = np.zeros((X.shape[0], weights.hidden_dim)) if h0 is None else np.broadcast_to(
        np.asarray(h0, dtype=np.float64), (X.shape[0], weights.hidden_dim))
    hs, _, pred = _gru_run(weights, X, h0)
    h_seq = np.transpose(hs[1:], (1, 0, 2))
    if single:
        return h_seq[0], float(pred[0])
    return h_seq, pred


def _gru_backward(w: GruWeights, X, hs, cache, dpred) -> np.ndarray:
    H = w.hidden_dim
    g = GruWeights.zeros(w.input_dim, H)
    L = X.shape[1]
    g.W_out[0] = dpred @ hs[L]
    g.b_out[0] = dpred.sum()
    dh = np.outer(dpred, w.W_out[0])
    Wh, Wx = w.W[:, :H], w.W[:, H:]
    gWh, gWx = g.W[:, :H], g.W[:, H:]
    for t in range(L - 1, -1, -1):
        x, h = X[:, t], hs[t]
        z, r, hh = cache[t]
        dz = dh * (hh - h)
        dhh = dh * z
        dh_prev = dh * (1.0 - z)
        da_h = dhh * (1.0 - hh * hh)
        rh = r * h
        gWh += da_h.T @ rh
        gWx += da_h.T @ x
        g.b_h += da_h.sum(0)
        drh = da_h @ Wh
        dr = drh * h
        dh_prev += drh * r
        da_z = dz * z * (1.0 - z)
        g.W_z += da_z.T @ x
        g.U_z += da_z.T @ h
        g.b_z += da_z.sum(0)
        dh_prev += da_z @ w.U_z
        da_r = dr * r * (1.0 - r)
        g.W_r += da_r.T @ x
        g.U_r += da_r.T @ h
        g.b_r += da_r.sum(0)
        dh_prev += da_r @ w.U_r
        dh = dh_prev
    return g.flat


# --------------------------------------------------------------------------
# LSTM
# --------------------------------------------------------------------------

def _lstm_run(w: LstmWeights, X: np.ndarray, h0: np.ndarray, c0: np.ndarray):
    B, L, _ = X.shape
    H = w.hidden_dim
    hs = np.empty((L + 1, B, H))
    cs = np.empty((L + 1, B, H))
    hs[0], cs[0] = h0, c0
    W_all = np.vstack([w.W_f, w.W_i, w.W_o, w.W_c])
    b_all = np.concatenate([w.b_f, w.b_i, w.b_o, w.b_c])
    cache = []
    for t in range(L):
        v = np.concatenate([hs[t], X[:, t]], axis=1)
        a = v @ W_all.T + b_all
        f = _sigmoid(a[:, :H])
        i = _sigmoid(a[:, H:2 * H])
        o = _sigmoid(a[:, 2 * H:3 * H])
        gc = np.tanh(a[:, 3 * H:])
        cs[t + 1] = f * cs[t] + i * gc
        tc = np.tanh(cs[t + 1])
        hs[t + 1] = o * tc
        cache.append((v, f, i, o, gc, tc))
    pred = hs[L] @ w.W_out[0] + w.b_out[0]
    return hs, cs, cache, pred, W_all


def lstm_forward(weights: LstmWeights, x_seq, h0=None, c0=None):
    """Run the LSTM; returns hidden states per step and the readout of the last one."""
    single = np.asarray(x_seq).ndim == 2
    X = _check_inputs(weights, x_seq)
    shape = (X.shape[0], weights.hidden_dim)
    h0 = np.zeros(shape) if h0 is None else np.broadcast_to(np.asarray(h0, dtype=np.float64), shape)
    c0 = np.zeros(shape) if c0 is None else np.broadcast_to(np.asarray(c0, dtype=np.float64), shape)
    hs, _, _, pred, _ = _lstm_run(weights, X, h0, c0)
    h_seq = np.transpose(hs[1:], (1, 0, 2))
    if single:
        return h_seq[0], float(pred[0])
    return h_seq, pred


def _lstm_backward(w: LstmWeights, X, hs, cs, cache, dpred, W_all) -> np.ndarray:
    H = w.hidden_dim
    L = X.shape[1]
    g = LstmWeights.zeros(w.input_dim, H)
    g.W_out[0] = dpred @ hs[L]
    g.b_out[0] = dpred.sum()
    dh = np.outer(dpred, w.W_out[0])
    dc = np.zeros_like(dh)
    gW = np.zeros_like(W_all)
    gb = np.zeros(4 * H)
    for t in range(L - 1, -1, -1):
        v, f, i, o, gc, tc = cache[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        df = dc * cs[t]
        di = dc * gc
        dgc = dc * i
        dc = dc * f
        da = np.concatenate([df * f * (1.0 - f), di * i * (1.0 - i),
                             do * o * (1.0 - o), dgc * (1.0 - gc * gc)], axis=1)
        gW += da.T @ v
        gb += da.sum(0)
        dh = (da @ W_all)[:, :H]
    g.W_f[:], g.W_i[:], g.W_o[:], g.W_c[:] = gW[:H], gW[H:2 * H], gW[2 * H:3 * H], gW[3 * H:]
    g.b_f[:], g.b_i[:], g.b_o[:], g.b_c[:] = gb[:H], gb[H:2 * H], gb[2 * H:3 * H], gb[3 * H:]
    return g.flat


# --------------------------------------------------------------------------
# loss and gradients
# --------------------------------------------------------------------------

def batch_predict(weights: _Weights, X) -> np.ndarray:
    X = _check_inputs(weights, X)
    zeros = np.zeros((X.shape[0], weights.hidden_dim))
    if weights.cell is Cell.GRU:
        return _gru_run(weights, X, zeros)[2]
    return _lstm_run(weights, X, zeros, zeros)[3]


def batch_loss(weights: _Weights, X, targets) -> float:
    pred = batch_predict(weights, X)
    err = pred - np.asarray(targets, dtype=np.float64).reshape(-1)
    return float(np.mean(err * err))


def bptt_gradients(weights: _Weights, X, targets) -> tuple[float, np.ndarray]:
    """Mean-squared-error loss over the batch and its exact gradient (flat, weights layout)."""
    X = _check_inputs(weights, X)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if targets.size != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} sequences but {targets.size} targets")
    B = X.shape[0]
    zeros = np.zeros((B, weights.hidden_dim))
    if weights.cell is Cell.GRU:
        hs, cache, pred = _gru_run(weights, X, zeros)
        err = pred - targets
        grad = _gru_backward(weights, X, hs, cache, 2.0 * err / B)
    else:
        hs, cs, cache, pred, W_all = _lstm_run(weights, X, zeros, zeros)
        err = pred - targets
        grad = _lstm_backward(weights, X, hs, cs, cache, 2.0 * err / B, W_all)
    return float(np.mean(err * err)), grad


# --------------------------------------------------------------------------
# windows, training and prediction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaling:
    y_mean: float
    y_std: float
    exog_mean: np.ndarray
    exog_std: np.ndarray


def _safe_std(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return np.where(v > 1e-12, v, 1.0)


def _exog_block(exog: Sequence[DailySeries], first: int, last: int) -> np.ndarray:
    cols = []
    for s in exog:
        if not s.covers(first, last):
            raise CoverageError(f"exogenous series {s!r} does not cover {iso(first)}..{iso(last)}")
        cols.append(s.values_for(first, last))
    if not cols:
        return np.zeros((last - first + 1, 0))
    return np.column_stack(cols)


def _windows(yz: np.ndarray, xz: np.ndarray, L: int, targets: range):
    """Input windows for target positions; step k of target t is [y[t-L+k], x[t-L+k+1]]."""
    idx = np.array(list(targets))
    offs = np.arange(L)
    y_part = yz[idx[:, None] - L + offs]
    x_part = xz[idx[:, None] - L + 1 + offs]
    return np.concatenate([y_part[:, :, None], x_part], axis=2)


@dataclass(frozen=True, eq=False)
class RnnModel:
    config: RnnConfig
    params: np.ndarray
    scaling: Scaling
    train_curve: tuple[float, ...] = ()
    val_curve: tuple[float, ...] = ()
    best_epoch: int = 0
    signal_ids: tuple[str, ...] = ()

    @property
    def weights(self) -> _Weights:
        return weights_class(self.config.cell)(self.params.copy(), self.config.input_dim,
                                               self.config.hidden_dim)

    def to_dict(self) -> dict:
        cfg = self.config
        return {
            "type": "rnn",
            "config": {"cell": cfg.cell.value, "input_dim": cfg.input_dim,
                       "hidden_dim": cfg.hidden_dim, "lookback": cfg.lookback,
                       "epochs": cfg.epochs, "learning_rate": cfg.learning_rate,
                       "seed": cfg.seed, "validation_fraction": cfg.validation_fraction,
                       "batch_size": cfg.batch_size},
            "shapes": {name: list(shape) for name, shape in
                       _layout(cfg.cell, cfg.input_dim, cfg.hidden_dim)},
            "params": self.params.tolist(),
            "scaling": {"y_mean": self.scaling.y_mean, "y_std": self.scaling.y_std,
                        "exog_mean": self.scaling.exog_mean.tolist(),
                        "exog_std": self.scaling.exog_std.tolist()},
            "train_curve": list(self.train_curve),
            "val_curve": list(self.val_curve),
            "best_epoch": self.best_epoch,
            "signal_ids": list(self.signal_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RnnModel":
        cfg = RnnConfig(**data["config"])
        sc = data["scaling"]
        return cls(config=cfg, params=np.asarray(data["params"], dtype=np.float64),
                   scaling=Scaling(sc["y_mean"], sc["y_std"], np.asarray(sc["exog_mean"], float),
                                   np.asarray(sc["exog_std"], float)),
                   train_curve=tuple(data.get("train_curve", ())),
                   val_curve=tuple(data.get("val_curve", ())),
                   best_epoch=data.get("best_epoch", 0),
                   signal_ids=tuple(data.get("signal_ids", ())))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RnnModel":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RnnModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def train(config: RnnConfig, y: DailySeries, exog: Sequence[DailySeries] = ()) -> RnnModel:
    """Fit a GRU/LSTM to predict ``y_t`` from the previous ``lookback`` days.

    Inputs and targets are z-scored with the full training window's
    statistics.  The most recent ``validation_fraction`` of samples is held
    out for early stopping; the best-validation weights are returned.
    """
    exog = list(exog)
    cfg = config
    if cfg.input_dim != 1 + len(exog):
        cfg = replace(cfg, input_dim=1 + len(exog))
    L = cfg.lookback
    n = len(y)
    if n < L + 10:
        raise TooShortError(f"need at least {L + 10} days to train, got {n}")

    X_raw = _exog_block(exog, y.start_day, y.end_day)
    scaling = Scaling(float(np.mean(y.values)), float(_safe_std(np.std(y.values))),
                      X_raw.mean(axis=0) if exog else np.zeros(0),
                      _safe_std(X_raw.std(axis=0)) if exog else np.zeros(0))
    yz = (y.values - scaling.y_mean) / scaling.y_std
    xz = (X_raw - scaling.exog_mean) / scaling.exog_std if exog else X_raw

    targets_idx = range(L, n)
    X_all = _windows(yz, xz, L, targets_idx)
    t_all = yz[L:]
    n_val = int(math.floor(cfg.validation_fraction * len(t_all)))
    n_tr = len(t_all) - n_val
    X_tr, t_tr = X_all[:n_tr], t_all[:n_tr]
    X_val, t_val = X_all[n_tr:], t_all[n_tr:]

    rng = np.random.default_rng(cfg.seed)
    cls = weights_class(cfg.cell)
    w = cls.random(cfg.input_dim, cfg.hidden_dim, rng)
    params = w.flat.copy()
    state = AdamState.zeros(params.size, lr=cfg.learning_rate)
    batch = cfg.batch_size if cfg.batch_size > 0 else n_tr

    best_params, best_val, best_epoch, stale = params.copy(), math.inf, 0, 0
    train_curve, val_curve = [], []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n_tr) if batch < n_tr else np.arange(n_tr)
        losses = []
        for lo in range(0, n_tr, batch):
            sel = order[lo:lo + batch]
            loss, grad = bptt_gradients(cls(params, cfg.input_dim, cfg.hidden_dim), X_tr[sel], t_tr[sel])
            state, params = adam_step(state, params, grad)
            losses.append(loss * len(sel))
        train_curve.append(float(sum(losses) / n_tr))
        if n_val:
            v = batch_loss(cls(params, cfg.input_dim, cfg.hidden_dim), X_val, t_val)
            val_curve.append(v)
            if v < best_val - 1e-12:
                best_val, best_params, best_epoch, stale = v, params.copy(), epoch, 0
            else:
                stale += 1
                if stale >= PATIENCE and epoch > WARMUP:
                    break
        else:
            best_params, best_epoch = params.copy(), epoch

    ids = tuple(getattr(s, "signal_id", "") for s in exog)
    return RnnModel(cfg, best_params, scaling, tuple(train_curve), tuple(val_curve), best_epoch, ids)


def holdout(model: RnnModel, y: DailySeries, exog: Sequence[DailySeries] = ()):
    """Validation-split windows (z-scored) exactly as ``train`` built them."""
    cfg = model.config
    L = cfg.lookback
    sc = model.scaling
    X_raw = _exog_block(list(exog), y.start_day, y.end_day)
    yz = (y.values - sc.y_mean) / sc.y_std
    xz = (X_raw - sc.exog_mean) / sc.exog_std if len(exog) else X_raw
    X_all = _windows(yz, xz, L, range(L, len(y)))
    t_all = yz[L:]
    n_val = int(math.floor(cfg.validation_fraction * len(t_all)))
    return X_all[len(t_all) - n_val:], t_all[len(t_all) - n_val:], X_all[:len(t_all) - n_val], t_all[:len(t_all) - n_val]


def predict_path(model: RnnModel, y_history: DailySeries, exog_full: Sequence[DailySeries] = (),
                 gap_len: int = 0, horizon: int = 1) -> np.ndarray:
    """Unclamped count-space outputs for the gap followed by the horizon."""
    cfg = model.config
    L = cfg.lookback
    exog_full = list(exog_full)
    if len(exog_full) != cfg.input_dim - 1:
        raise CoverageError(f"model needs {cfg.input_dim - 1} exogenous series, got {len(exog_full)}")
    if len(y_history) < L:
        raise TooShortError(f"need {L} days of history, got {len(y_history)}")
    if gap_len < 0 or horizon < 1:
        raise ValueError("gap_len must be >= 0 and horizon >= 1")
    sc = model.scaling
    steps = gap_len + horizon
    first = y_history.end_day - L + 1
    last = y_history.end_day + steps
    xz = (_exog_block(exog_full, first + 1, last) - sc.exog_mean) / sc.exog_std \
        if exog_full else np.zeros((last - first, 0))
    ys = list((y_history.values[-L:] - sc.y_mean) / sc.y_std)
    w = model.weights
    out = np.empty(steps)
    for h in range(steps):
        window = np.concatenate([np.asarray(ys[-L:])[:, None], xz[h:h + L]], axis=1)
        z = float(batch_predict(w, window[None])[0])
        ys.append(z)
        out[h] = z * sc.y_std + sc.y_mean
    return out


def predict(model: RnnModel, y_history: DailySeries, exog_full: Sequence[DailySeries] = (),
            gap_len: int = 0, horizon: int = 1) -> DailySeries:
    """Recursive forecast: outputs fill the gap, then the horizon; clamped at zero."""
    path = predict_path(model, y_history, exog_full, gap_len, horizon)
    return DailySeries(y_history.end_day + gap_len + 1, np.maximum(path[gap_len:], 0.0))
