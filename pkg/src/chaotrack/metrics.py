"""Forecast evaluation: MAE, per-location-averaged RMSE and DTW.

Slices are ``N x h`` (locations by prediction steps).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class EvalSlice:
    truth: np.ndarray
    prediction: np.ndarray

    def __post_init__(self):
        truth = np.atleast_2d(np.asarray(self.truth, dtype=np.float64))
        pred = np.atleast_2d(np.asarray(self.prediction, dtype=np.float64))
        if truth.shape != pred.shape:
            raise ShapeError(f"truth {truth.shape} and prediction {pred.shape} differ")
        if truth.shape[1] < 1:
            raise ShapeError("period length must be >= 1")
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "prediction", pred)

    @property
    def h(self) -> int:
        return self.truth.shape[1]

    @classmethod
    def from_time_major(cls, truth: np.ndarray, prediction: np.ndarray) -> "EvalSlice":
        """Build from ``T x N`` arrays (the grid orientation)."""
        return cls(np.asarray(truth).T, np.asarray(prediction).T)


def mae(s: EvalSlice) -> float:
    return float(np.abs(s.prediction - s.truth).sum() / s.truth.size)


def rmse(s: EvalSlice) -> float:
    # mean over locations of the per-location RMSE, not the pooled RMSE
    per_loc = np.sqrt(np.sum((s.truth - s.prediction) ** 2, axis=1) / s.h)
    return float(per_loc.mean())


def dtw(a, b) -> float:
    """Unconstrained DTW distance with local cost ``|a_i - b_j|``.

    Keeps only two rows of the cumulative-cost table.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ShapeError("dtw needs non-empty series")
    if a.size < b.size:
        a, b = b, a
    bl = b.tolist()
    n = len(bl)
    inf = float("inf")
    prev = [inf] * (n + 1)
    prev[0] = 0.0
    for ai in a.tolist():
        cur = [inf] * (n + 1)
        left = inf
        for j in range(1, n + 1):
            diag, up = prev[j - 1], prev[j]
            best = diag if diag <= up else up
            if left < best:
                best = left
            left = abs(ai - bl[j - 1]) + best
            cur[j] = left
        prev = cur
    return prev[n]


def dtw_grid(truth: np.ndarray, prediction: np.ndarray) -> np.ndarray:
    """Per-location DTW for ``T x N`` arrays."""
    truth = np.atleast_2d(truth)
    prediction = np.atleast_2d(prediction)
    if truth.shape != prediction.shape:
        raise ShapeError(f"truth {truth.shape} and prediction {prediction.shape} differ")
    return np.array([dtw(truth[:, i], prediction[:, i]) for i in range(truth.shape[1])])
