"""Closed-loop autoregressive rollout and error-growth diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import NonFiniteError, ShapeError
from .model import ModelOutput, ModelParams, model_forward

ForwardFn = Callable[..., ModelOutput]


@dataclass(frozen=True)
class ForecastResult:
    predictions: np.ndarray
    x_hat_trace: np.ndarray
    delta_trace: np.ndarray

    @property
    def horizon(self) -> int:
        return self.predictions.shape[0]


def _window_len(params: ModelParams, n_locations: int) -> int:
    d, rem = divmod(params.dlc[0][0].shape[0], n_locations)
    if rem:
        raise ShapeError(
            f"history has {n_locations} locations, incompatible with model input "
            f"width {params.dlc[0][0].shape[0]}"
        )
    return d


def _run(params, history, horizon, step: Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray]]):
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = history[:, None]
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = history.shape[1]
    d = _window_len(params, n)
    if history.shape[0] < d:
        raise ShapeError(f"history has {history.shape[0]} rows; the model window needs {d}")
    buf = history[-d:].copy()
    preds = np.empty((horizon, n))
    x_hats = np.empty((horizon, n))
    deltas = np.empty((horizon, n))
    for k in range(horizon):
        # overflow is reported below as NonFiniteError
        with np.errstate(over="ignore", invalid="ignore"):
            x_hat, delta = step(k, buf.reshape(-1))
            out = x_hat + delta
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"non-finite prediction at step {k}")
        x_hats[k], deltas[k], preds[k] = x_hat, delta, out
        buf = np.vstack([buf[1:], out[None, :]])
    return ForecastResult(preds, x_hats, deltas)


def rollout(
    params: ModelParams,
    history: np.ndarray,
    horizon: int,
    mode: Literal["mean", "sample"] = "mean",
    seed: int | None = None,
    *,
    ablate_itc: bool = False,
    forward_fn: ForwardFn = model_forward,
) -> ForecastResult:
    """Predict ``horizon`` steps past the end of ``history`` using only model outputs.

    The first window is the last ``d`` history rows; after each step the
    oldest row is dropped and the prediction appended. ``ablate_itc`` zeroes
    the ITC feedback at prediction time (DLC-only ablation). ``forward_fn``
    lets tests substitute an instrumented model.
    """
    rng = None
    if mode == "sample":
        if seed is None:
            raise ValueError("sample mode needs a seed")
        rng = np.random.default_rng(seed)
    elif mode != "mean":
        raise ValueError(f"unknown mode {mode!r}")
    latent_dim = params.mu_head[0].shape[1]

    def step(_k, window):
        eps = rng.standard_normal(latent_dim) if rng is not None else None
        out = forward_fn(params, window, mode, eps)
        delta = np.zeros_like(out.x_hat) if ablate_itc else out.delta_hat
        return out.x_hat, delta

    return _run(params, history, horizon, step)


def rollout_with_oracle_delta(
    params: ModelParams,
    history: np.ndarray,
    truth: np.ndarray,
    horizon: int | None = None,
    *,
    forward_fn: ForwardFn = model_forward,
) -> ForecastResult:
    """Rollout where step ``k`` uses the correction ``truth[k] - x_hat[k]`` instead of the ITC.

    Diagnostic upper bound on what a perfect information-tracking component
    could contribute.
    """
    truth = np.asarray(truth, dtype=np.float64)
    if truth.ndim == 1:
        truth = truth[:, None]
    horizon = truth.shape[0] if horizon is None else horizon
    if truth.shape[0] < horizon:
        raise ShapeError(f"truth has {truth.shape[0]} rows, horizon is {horizon}")

    def step(k, window):
        x_hat = forward_fn(params, window, "mean", None).x_hat
        return x_hat, truth[k] - x_hat

    return _run(params, history, horizon, step)


@dataclass(frozen=True)
class ErrorGrowth:
    rmse: np.ndarray
    slope: float


ERROR_FLOOR = 1e-12
SLOPE_STEPS = 100


def error_growth(predictions: np.ndarray, truth: np.ndarray) -> ErrorGrowth:
    """Per-step RMSE over locations and the least-squares slope of its log.

    The slope is fitted to ``ln(max(e_t, 1e-12))`` over the first
    ``min(H, 100)`` steps; a positive slope means exponential error growth.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predictions.ndim == 1:
        predictions, truth = predictions[:, None], truth[:, None]
    if predictions.shape != truth.shape:
        raise ShapeError(f"predictions {predictions.shape} vs truth {truth.shape}")
    H = predictions.shape[0]
    if H < 8:
        raise ShapeError(f"error_growth needs at least 8 steps, got {H}")
    rmse = np.sqrt(np.mean((predictions - truth) ** 2, axis=1))
    m = min(H, SLOPE_STEPS)
    y = np.log(np.maximum(rmse[:m], ERROR_FLOOR))
    t = np.arange(m, dtype=np.float64)
    tc = t - t.mean()
    slope = float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))
    return ErrorGrowth(rmse, slope)
