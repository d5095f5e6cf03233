"""L-BFGS, Adam and a central-difference gradient oracle."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionError, NonFiniteError

logger = logging.getLogger(__name__)


class ObjectiveEval(NamedTuple):
    value: float
    gradient: np.ndarray


@dataclass(frozen=True)
class LbfgsConfig:
    memory: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    # relative decrease below which the run counts as converged (scipy's factr=1e7)
    ftol: float = 1e7 * 2.220446049250313e-16
    c1: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40


@dataclass(frozen=True)
class LbfgsResult:
    x: np.ndarray
    f: float
    converged: bool
    n_iter: int
    grad_norm: float
    message: str = ""

    def __iter__(self):
        # allows ``x, f, ok = lbfgs_minimize(...)``
        return iter((self.x, self.f, self.converged))


def _evaluate(objective, x: np.ndarray) -> tuple[float, np.ndarray]:
    out = objective(x)
    value, grad = float(out[0]), np.asarray(out[1], dtype=np.float64).reshape(-1)
    if grad.shape != x.shape:
        raise DimensionError(f"gradient has dimension {grad.size}, parameters {x.size}")
    return value, grad


def _two_loop(g: np.ndarray, pairs) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def lbfgs_minimize(objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
                   x0, config: LbfgsConfig | None = None) -> LbfgsResult:
    """Minimise ``objective`` (returning value and gradient) from ``x0``.

    Search directions come from the two-loop recursion over the last
    ``config.memory`` curvature pairs; steps are accepted by Armijo
    backtracking.  The returned value never exceeds ``f(x0)``.
    """
    cfg = config or LbfgsConfig()
    x = np.array(x0, dtype=np.float64).reshape(-1)
    f, g = _evaluate(objective, x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteError("objective is not finite at the starting point")

    pairs: deque = deque(maxlen=cfg.memory)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    if gnorm <= cfg.grad_tol:
        return LbfgsResult(x, f, True, 0, gnorm, "gradient below tolerance at start")

    message = "max_iters reached"
    converged = False
    it = 0
    while it < cfg.max_iters:
        it += 1
        direction = _two_loop(g, list(pairs))
        slope = g.dot(direction)
        if not slope < 0:
            pairs.clear()
            direction = -g
            slope = -g.dot(g)
        step = 1.0 if pairs else min(1.0, 1.0 / max(gnorm, 1e-12))

        accepted = False
        for _ in range(cfg.max_backtracks):
            x_new = x + step * direction
            f_new, g_new = _evaluate(objective, x_new)
            if np.isfinite(f_new) and f_new <= f + cfg.c1 * step * slope:
                accepted = True
                break
            step *= cfg.shrink
        if not accepted:
            if pairs:
                pairs.clear()
                continue
            message = "line search could not decrease the objective"
            converged = gnorm <= max(cfg.grad_tol, 1e-4)
            break
        if not np.all(np.isfinite(g_new)):
            raise NonFiniteError("non-finite gradient at an accepted iterate")

        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))

        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= cfg.grad_tol:
            message = "gradient below tolerance"
            converged = True
            break
        if decrease <= cfg.ftol * max(abs(f), 1.0):
            message = "relative decrease below ftol"
            converged = True
            break

    return LbfgsResult(x, f, converged, it, gnorm, message)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim), 0, lr, beta1, beta2, eps)


def adam_step(state: AdamState, params, grads) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns the new state and parameters."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError(f"shapes differ: params {params.shape}, grads {grads.shape}, "
                             f"state {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), new_params


def finite_diff_grad(objective: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(x+h e_i) - f(x-h e_i)) / 2h`` per coordinate."""
    x = np.array(x, dtype=np.float64).reshape(-1)
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        up = float(objective(x))
        x[i] = orig - h
        down = float(objective(x))
        x[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFiniteError(f"objective not finite near coordinate {i}")
        grad[i] = (up - down) / (2.0 * h)
    return grad
