"""Dormand-Prince 5(4) with PI step-size control (endpoint only)."""
from __future__ import annotations

import numpy as np

# Butcher tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# difference between 5th and embedded 4th order weights
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
# PI gains (Gustafsson / Hairer DOPRI5)
BETA = 0.04
ALPHA = 0.2 - 0.75 * BETA
MAX_STEPS = 200_000


class SolverFailure(RuntimeError):
    """Adaptive integration could not proceed; ``last_time`` is the last accepted time."""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last good time {last_time!r})")
        self.last_time = last_time


def _err_norm(err, y, y_new, rtol, atol):
    sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / sc) ** 2)))


def _initial_step(f, y, f0, horizon, rtol, atol):
    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, horizon)
    f1 = f(y + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, horizon)


def integrate(f, y0, horizon, rtol, atol):
    """Advance ``y' = f(y)`` from ``y0`` over ``[0, horizon]``.

    Returns ``(y_end, n_accepted, n_rejected)``.
    """
    y = np.array(y0, dtype=float, copy=True)
    if horizon == 0.0:
        return y, 0, 0
    t = 0.0
    k = np.empty((7, y.size))
    k[0] = f(y)
    h = _initial_step(f, y, k[0], horizon, rtol, atol)
    err_old = 1e-4
    n_acc = n_rej = 0
    rejected_last = False
    while t < horizon:
        if n_acc + n_rej >= MAX_STEPS:
            raise SolverFailure(f"step budget of {MAX_STEPS} exhausted", t)
        if h < 16 * np.finfo(float).eps * max(abs(t), horizon):
            raise SolverFailure("step size underflow", t)
        last = t + h >= horizon
        if last:
            h = horizon - t
        for s in range(1, 7):
            ys = y + h * np.dot(A[s], k[:s])
            k[s] = f(ys)
        y_new = y + h * np.dot(B, k)
        err = _err_norm(h * np.dot(E, k), y, y_new, rtol, atol)
        if not np.isfinite(err):
            n_rej += 1
            h *= FAC_MIN
            rejected_last = True
            continue
        if err <= 1.0:
            fac = err ** ALPHA / err_old ** BETA if err > 0 else 1.0 / FAC_MAX
            fac = min(1.0 / FAC_MIN, max(1.0 / FAC_MAX, fac / SAFETY))
            h_new = h / fac
            if rejected_last:
                h_new = min(h_new, h)
            err_old = max(err, 1e-4)
            t = horizon if last else t + h
            y = y_new
            k[0] = k[6]  # FSAL
            n_acc += 1
            rejected_last = False
            h = h_new
        else:
            fac = min(1.0 / FAC_MIN, err ** ALPHA / SAFETY)
            h = h / fac
            n_rej += 1
            rejected_last = True
    return y, n_acc, n_rej
