import numpy as np
import pytest
from hypothesis import given, strategies as st

from cyberforecast.errors import DimensionError, NonFiniteError
from cyberforecast.optim import (AdamState, LbfgsConfig, ObjectiveEval, adam_step, finite_diff_grad,
                                 lbfgs_minimize)


def quad(x):
    return float(np.sum((x - 1.0) ** 2)), 2.0 * (x - 1.0)


def rosen(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_lbfgs_quadratic():
    res = lbfgs_minimize(quad, np.zeros(5))
    assert res.converged
    np.testing.assert_allclose(res.x, np.ones(5), atol=1e-6)


def test_lbfgs_rosenbrock():
    x, f, ok = lbfgs_minimize(rosen, np.array([-1.2, 1.0]), LbfgsConfig(grad_tol=1e-9, ftol=0.0))
    assert ok
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-4)
    assert f < 1e-8


def test_lbfgs_already_optimal():
    res = lbfgs_minimize(quad, np.ones(3))
    assert res.converged and res.n_iter <= 1
    np.testing.assert_array_equal(res.x, np.ones(3))


def test_lbfgs_accepts_objective_eval():
    res = lbfgs_minimize(lambda x: ObjectiveEval(*quad(x)), np.zeros(2))
    np.testing.assert_allclose(res.x, 1.0, atol=1e-6)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_lbfgs_never_increases_objective(start):
    x0 = np.array(start)
    res = lbfgs_minimize(rosen if len(start) == 2 else quad, x0)
    f0 = (rosen if len(start) == 2 else quad)(x0)[0]
    assert res.f <= f0


def test_lbfgs_dimension_error():
    with pytest.raises(DimensionError):
        lbfgs_minimize(lambda x: (0.0, np.zeros(3)), np.zeros(2))


def test_lbfgs_non_finite_start():
    with pytest.raises(NonFiniteError):
        lbfgs_minimize(lambda x: (float("nan"), np.zeros(2)), np.zeros(2))


def test_lbfgs_rejects_non_finite_trial_points():
    # infinite wall beyond x=2: the line search must back off
    def f(x):
        if x[0] > 2:
            return float("inf"), np.full(1, np.nan)
        return float((x[0] - 1.9) ** 2), np.array([2 * (x[0] - 1.9)])
    res = lbfgs_minimize(f, np.array([-10.0]))
    assert res.x[0] == pytest.approx(1.9, abs=1e-5)


def test_adam_zero_gradient_is_fixed_point():
    st0 = AdamState.zeros(3, lr=0.1)
    st1, p = adam_step(st0, np.array([1.0, 2.0, 3.0]), np.zeros(3))
    np.testing.assert_array_equal(p, [1.0, 2.0, 3.0])
    assert st1.step == 1


def test_adam_first_step_hand_value():
    st0 = AdamState.zeros(1, lr=0.1)
    _, p = adam_step(st0, np.array([0.0]), np.array([1.0]))
    # m_hat = v_hat = 1, so the step is lr * 1 / (1 + eps)
    assert p[0] == pytest.approx(-0.1 / (1 + st0.eps), abs=1e-15)


def test_adam_converges_on_parabola():
    state, x = AdamState.zeros(1, lr=0.05), np.array([5.0])
    for _ in range(500):
        state, x = adam_step(state, x, 2 * x)
    assert abs(x[0]) < 0.1


def test_adam_is_pure():
    st0 = AdamState.zeros(2, lr=0.1)
    params = np.array([1.0, 1.0])
    adam_step(st0, params, np.array([1.0, -1.0]))
    assert st0.step == 0 and np.all(st0.m == 0) and np.all(params == 1.0)


def test_adam_dimension_error():
    with pytest.raises(DimensionError):
        adam_step(AdamState.zeros(2, lr=0.1), np.zeros(2), np.zeros(3))


def test_adam_v_nonnegative(rng):
    state, x = AdamState.zeros(4, lr=0.01), rng.normal(size=4)
    for _ in range(20):
        state, x = adam_step(state, x, rng.normal(size=4))
        assert np.all(state.v >= 0)


def test_finite_diff_square():
    g = finite_diff_grad(lambda x: float(x[0] ** 2), np.array([3.0]))
    assert g[0] == pytest.approx(6.0, abs=1e-6)


def test_finite_diff_constant():
    np.testing.assert_array_equal(finite_diff_grad(lambda x: 7.0, np.zeros(4)), np.zeros(4))


def test_finite_diff_cubic(rng):
    for _ in range(10):
        a, b, c, d = rng.normal(size=4)
        x = rng.normal()
        num = finite_diff_grad(lambda v: float(a * v[0] ** 3 + b * v[0] ** 2 + c * v[0] + d), np.array([x]))[0]
        exact = 3 * a * x * x + 2 * b * x + c
        assert abs(num - exact) <= 1e-6 * max(1.0, abs(exact))


def test_finite_diff_non_finite():
    with pytest.raises(NonFiniteError):
        finite_diff_grad(lambda x: float("inf"), np.zeros(1))
