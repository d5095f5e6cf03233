import math

import numpy as np
import pytest

from cyberforecast import rnn
from cyberforecast.errors import CoverageError, DimensionError, TooShortError
from cyberforecast.evaluation import error_metrics
from cyberforecast.optim import finite_diff_grad
from cyberforecast.rnn import (Cell, GruWeights, LstmWeights, RnnConfig, RnnModel, bptt_gradients,
                               gru_forward, lstm_forward, predict, predict_path, train)
from cyberforecast.series import DailySeries


def sig(a):
    return 1.0 / (1.0 + math.exp(-a))


def ser(values, start=0):
    return DailySeries(start, np.asarray(values, dtype=float))


def ramp_sine(n=300):
    t = np.arange(n)
    return ser(0.02 * t + 3.0 * np.sin(2 * np.pi * t / 7.0) + 10.0)


def gradient_check(cell, seed, I=2, H=3, L=4, B=5):
    rng = np.random.default_rng(seed)
    cls = rnn.weights_class(cell)
    w = cls.random(I, H, rng, scale=0.5)
    X, t = rng.normal(size=(B, L, I)), rng.normal(size=B)
    _, g = bptt_gradients(w, X, t)
    num = finite_diff_grad(lambda p: rnn.batch_loss(cls(p, I, H), X, t), w.flat.copy(), 1e-5)
    return np.abs(g - num) / np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-12)


# ---------------------------------------------------------------- shapes

def test_gru_shapes():
    w = GruWeights.zeros(2, 4)
    assert w.W_z.shape == (4, 2) and w.U_z.shape == (4, 4) and w.W_r.shape == (4, 2)
    assert w.W.shape == (4, 6) and w.W_out.shape == (1, 4) and w.b_out.shape == (1,)


def test_lstm_shapes():
    w = LstmWeights.zeros(2, 4)
    for name in ("W_f", "W_i", "W_o", "W_c"):
        assert getattr(w, name).shape == (4, 6)


def test_config_validation():
    with pytest.raises(ValueError):
        RnnConfig(hidden_dim=0)
    with pytest.raises(ValueError):
        RnnConfig(lookback=0)
    with pytest.raises(ValueError):
        RnnConfig(validation_fraction=0.5)


# ---------------------------------------------------------------- forward

def test_gru_zero_weights():
    w = GruWeights.zeros(1, 3)
    w.b_out[0] = 0.7
    h, pred = gru_forward(w, np.ones((5, 1)))
    assert np.all(h == 0) and pred == 0.7
    h, _ = gru_forward(w, np.ones((3, 1)), h0=np.full(3, 8.0))
    np.testing.assert_allclose(h[:, 0], [4.0, 2.0, 1.0])


def test_gru_one_step_by_hand():
    w = GruWeights.zeros(1, 1)
    w.W_z[0, 0], w.U_z[0, 0], w.b_z[0] = 0.3, -0.2, 0.1
    w.W_r[0, 0], w.U_r[0, 0], w.b_r[0] = -0.5, 0.4, 0.05
    w.W[0, 0], w.W[0, 1], w.b_h[0] = 0.8, 0.6, -0.1
    w.W_out[0, 0], w.b_out[0] = 1.5, 0.2
    x, h0 = 2.0, 0.5
    z = sig(0.3 * x - 0.2 * h0 + 0.1)
    r = sig(-0.5 * x + 0.4 * h0 + 0.05)
    hh = math.tanh(0.8 * r * h0 + 0.6 * x - 0.1)
    h1 = (1 - z) * h0 + z * hh
    h, pred = gru_forward(w, [[x]], h0=[h0])
    assert h[0, 0] == pytest.approx(h1, abs=1e-14)
    assert pred == pytest.approx(1.5 * h1 + 0.2, abs=1e-14)


def test_lstm_zero_weights():
    w = LstmWeights.zeros(2, 3)
    w.b_out[0] = -0.3
    h, pred = lstm_forward(w, np.ones((4, 2)))
    assert np.all(h == 0) and pred == -0.3


def test_lstm_one_step_by_hand():
    w = LstmWeights.zeros(1, 1)
    vals = {"f": (0.2, 0.3, 0.1), "i": (-0.4, 0.5, 0.0), "o": (0.6, -0.1, 0.2), "c": (0.7, 0.9, -0.3)}
    for g, (wh, wx, b) in vals.items():
        getattr(w, f"W_{g}")[0] = [wh, wx]
        getattr(w, f"b_{g}")[0] = b
    w.W_out[0, 0], w.b_out[0] = 2.0, 0.1
    x, h0, c0 = 1.5, -0.2, 0.4
    gate = {g: wh * h0 + wx * x + b for g, (wh, wx, b) in vals.items()}
    f, i, o = sig(gate["f"]), sig(gate["i"]), sig(gate["o"])
    c1 = f * c0 + i * math.tanh(gate["c"])
    h1 = o * math.tanh(c1)
    h, pred = lstm_forward(w, [[x]], h0=[h0], c0=[c0])
    assert h[0, 0] == pytest.approx(h1, abs=1e-14)
    assert pred == pytest.approx(2.0 * h1 + 0.1, abs=1e-14)


def test_forward_deterministic(rng):
    w = GruWeights.random(2, 4, rng)
    x = rng.normal(size=(6, 2))
    assert gru_forward(w, x)[1] == gru_forward(w, x)[1]
    lw = LstmWeights.random(2, 4, rng)
    assert lstm_forward(lw, x)[1] == lstm_forward(lw, x)[1]


def test_forward_dimension_error():
    with pytest.raises(DimensionError):
        gru_forward(GruWeights.zeros(2, 3), np.ones((4, 3)))
    with pytest.raises(DimensionError):
        GruWeights(np.zeros(5), 1, 2)


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("cell", [Cell.GRU, Cell.LSTM])
def test_bptt_matches_finite_differences(cell):
    for seed in range(3):
        assert gradient_check(cell, seed, I=1, H=3, L=4).max() < 1e-4


def test_bptt_zero_net_zero_targets():
    for cls in (GruWeights, LstmWeights):
        loss, g = bptt_gradients(cls.zeros(2, 3), np.ones((4, 5, 2)), np.zeros(4))
        assert loss == 0.0 and np.all(g == 0)


def test_bptt_duplicated_batch(rng):
    for cls in (GruWeights, LstmWeights):
        w = cls.random(2, 3, rng, scale=0.5)
        X, t = rng.normal(size=(4, 5, 2)), rng.normal(size=4)
        l1, g1 = bptt_gradients(w, X, t)
        l2, g2 = bptt_gradients(w, np.concatenate([X, X]), np.r_[t, t])
        assert l1 == pytest.approx(l2)
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_bptt_target_count_mismatch():
    with pytest.raises(DimensionError):
        bptt_gradients(GruWeights.zeros(1, 2), np.ones((3, 4, 1)), np.zeros(2))


# ---------------------------------------------------------------- training

def test_gru_beats_mean_predictor():
    y = ramp_sine()
    model = train(RnnConfig(cell=Cell.GRU, seed=0), y)
    X_val, t_val, _, t_tr = rnn.holdout(model, y)
    pred = rnn.batch_predict(model.weights, X_val)
    mse = np.mean((pred - t_val) ** 2)
    mean_mse = np.mean((t_tr.mean() - t_val) ** 2)
    assert mse < mean_mse
    sc = model.scaling
    actual = t_val * sc.y_std + sc.y_mean
    assert error_metrics(actual, pred * sc.y_std + sc.y_mean).mase < 1


def test_lstm_trains():
    y = ramp_sine()
    model = train(RnnConfig(cell=Cell.LSTM, seed=1, epochs=100), y)
    assert model.val_curve[model.best_epoch - 1] < model.val_curve[0]


def test_epochs_zero_returns_initial_weights():
    y = ramp_sine(60)
    cfg = RnnConfig(epochs=0, seed=4)
    model = train(cfg, y)
    init = GruWeights.random(1, cfg.hidden_dim, np.random.default_rng(4))
    np.testing.assert_array_equal(model.params, init.flat)
    assert model.train_curve == () and len(predict(model, y, (), 0, 3)) == 3


def test_initialisation_range():
    model = train(RnnConfig(epochs=0, seed=3, hidden_dim=8), ramp_sine(60))
    assert np.all(np.abs(model.params) <= 0.08)


def test_training_is_seeded():
    y = ramp_sine(120)
    cfg = RnnConfig(cell=Cell.LSTM, epochs=15, seed=7)
    a, b = train(cfg, y), train(cfg, y)
    assert a.params.tobytes() == b.params.tobytes()
    c = train(RnnConfig(cell=Cell.LSTM, epochs=15, seed=8), y)
    assert not np.array_equal(a.params, c.params)


def test_early_stopping_patience():
    rng = np.random.default_rng(0)
    y = ser(rng.normal(size=120))
    model = train(RnnConfig(epochs=500, seed=0, learning_rate=0.05), y)
    assert len(model.train_curve) <= max(model.best_epoch + 10, rnn.WARMUP + 1)
    assert len(model.train_curve) < 500


def test_minibatch_training_runs():
    model = train(RnnConfig(epochs=5, batch_size=16), ramp_sine(100))
    assert len(model.train_curve) == 5


def test_too_short():
    with pytest.raises(TooShortError):
        train(RnnConfig(lookback=7), ser(np.arange(16.0)))


def test_exog_inputs_and_coverage():
    rng = np.random.default_rng(2)
    x = ser(rng.normal(size=200))
    y = ser(np.r_[0.0, x.values[:-1]] * 2 + 5)
    model = train(RnnConfig(epochs=30), y, [x])
    assert model.config.input_dim == 2
    with pytest.raises(CoverageError):
        predict(model, y, [x], 0, 5)
    with pytest.raises(CoverageError):
        predict(model, y, [], 0, 1)


def test_model_json_round_trip():
    model = train(RnnConfig(epochs=3), ramp_sine(60))
    back = RnnModel.from_json(model.to_json())
    assert back == model
    assert predict(back, ramp_sine(60), (), 2, 3) == predict(model, ramp_sine(60), (), 2, 3)


# ---------------------------------------------------------------- prediction

def test_single_step_equals_forward_pass():
    y = ramp_sine(80)
    model = train(RnnConfig(epochs=5), y)
    sc = model.scaling
    window = ((y.values[-7:] - sc.y_mean) / sc.y_std)[:, None]
    _, z = gru_forward(model.weights, window)
    assert predict_path(model, y, (), 0, 1)[0] == pytest.approx(z * sc.y_std + sc.y_mean, abs=1e-12)


def test_gap_feeds_back():
    y = ramp_sine(80)
    model = train(RnnConfig(epochs=5), y)
    long = predict_path(model, y, (), 0, 10)
    np.testing.assert_allclose(predict_path(model, y, (), 4, 6), long, atol=1e-12)
    f = predict(model, y, (), 4, 6)
    assert f.start_day == y.end_day + 5
    np.testing.assert_allclose(f.values, np.maximum(long[4:], 0))


def test_constant_series_forecast():
    y = ser(np.full(100, 5.0))
    model = train(RnnConfig(epochs=50), y)
    for gap in (0, 30):
        np.testing.assert_allclose(predict(model, y, (), gap, 7).values, 5.0, atol=0.05)


def test_negative_readout_clamped():
    y = ser(np.arange(40.0) % 3)
    base = train(RnnConfig(epochs=0), y)
    w = GruWeights.zeros(1, base.config.hidden_dim)
    w.b_out[0] = -50.0
    model = RnnModel(base.config, w.flat, base.scaling)
    assert np.all(predict(model, y, (), 0, 5).values == 0.0)
    assert np.all(predict_path(model, y, (), 0, 5) < 0)
