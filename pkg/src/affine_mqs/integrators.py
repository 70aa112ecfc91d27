"""Fixed-step classical Runge-Kutta."""

from __future__ import annotations

from typing import Callable

import numpy as np


def rk4_step(f: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(f: Callable, t0: float, x0: np.ndarray, h: float, steps: int):
    """Integrate ``steps`` RK4 steps; returns (times, states) including the start."""
    xs = np.empty((steps + 1,) + np.shape(x0))
    xs[0] = x0
    x = np.asarray(x0, dtype=float)
    for k in range(steps):
        x = rk4_step(f, t0 + k * h, x, h)
        xs[k + 1] = x
    return t0 + h * np.arange(steps + 1), xs
