"""Deterministic chaotic and seasonal-chaotic generators used as desk-scale fixtures."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import GridSeries, Location, default_locations


def logistic_trajectory(r: float, x0: float, T: int) -> np.ndarray:
    """``T`` iterates of ``x -> r x (1 - x)`` starting with ``x0`` itself."""
    out = np.empty(T)
    x = float(x0)
    for t in range(T):
        out[t] = x
        x = r * x * (1.0 - x)
    return out


def gen_logistic(r: float, x0: float, T: int) -> GridSeries:
    if not 0.0 < x0 < 1.0:
        raise ValueError("x0 must lie in (0, 1)")
    return GridSeries(logistic_trajectory(r, x0, T)[:, None], [Location("logistic")])


def _lorenz_rhs(state, sigma, rho, beta):
    x, y, z = state
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def lorenz_trajectory(
    sigma: float, rho: float, beta: float, initial: Sequence[float], dt: float, T: int
) -> np.ndarray:
    """RK4 integration; row 0 is the initial state, shape ``(T, 3)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    out = np.empty((T, 3))
    s = np.asarray(initial, dtype=np.float64)
    for t in range(T):
        out[t] = s
        k1 = _lorenz_rhs(s, sigma, rho, beta)
        k2 = _lorenz_rhs(s + 0.5 * dt * k1, sigma, rho, beta)
        k3 = _lorenz_rhs(s + 0.5 * dt * k2, sigma, rho, beta)
        k4 = _lorenz_rhs(s + dt * k3, sigma, rho, beta)
        s = s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def gen_lorenz(
    sigma: float = 10.0,
    rho: float = 28.0,
    beta: float = 8.0 / 3.0,
    initial: Sequence[float] = (1.0, 1.0, 1.0),
    dt: float = 0.01,
    T: int = 1000,
    component: str = "x",
) -> GridSeries:
    """Lorenz-63 series; ``component`` is one of x, y, z or ``all`` (N=3)."""
    traj = lorenz_trajectory(sigma, rho, beta, initial, dt, T)
    names = ["x", "y", "z"]
    if component == "all":
        return GridSeries(traj, [Location(f"lorenz_{c}") for c in names])
    if component not in names:
        raise ValueError(f"component must be x, y, z or all, got {component!r}")
    k = names.index(component)
    return GridSeries(traj[:, k:k + 1].copy(), [Location(f"lorenz_{component}")])


def gen_seasonal_chaotic(
    amplitude: float = 10.0,
    period_weeks: float = 52.0,
    chaos_weight: float = 1.0,
    seed: int = 0,
    T: int = 1000,
    N: int = 4,
) -> GridSeries:
    """Phase-shifted sinusoids plus a rescaled r=4 logistic trajectory per location.

    Location ``i`` gets phase ``2*pi*i/N``; its logistic start point is drawn
    from ``seed``. Defaults give a temperature-like series: an annual cycle of
    amplitude 10 with irregular weekly anomalies of up to +-1.
    """
    if period_weeks < 2:
        raise ValueError("period_weeks must be >= 2")
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    x0s = rng.uniform(0.05, 0.95, size=N)
    t = np.arange(T, dtype=np.float64)
    values = np.empty((T, N))
    for i in range(N):
        seasonal = amplitude * np.sin(2.0 * np.pi * t / period_weeks + 2.0 * np.pi * i / N)
        chaos = 2.0 * logistic_trajectory(4.0, x0s[i], T) - 1.0
        values[:, i] = seasonal + chaos_weight * chaos
    return GridSeries(values, default_locations(N))
