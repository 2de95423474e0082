from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSeries

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Normalizer:
    """Per-location z-score using the population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(self.std <= 0):
            raise ValueError("normalizer std must be strictly positive")

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert_values(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean

    def apply(self, series: GridSeries) -> GridSeries:
        return series.with_values(self.apply_values(series.values))

    def invert(self, series: GridSeries) -> GridSeries:
        return series.with_values(self.invert_values(series.values))


def fit_normalizer(series: GridSeries) -> Normalizer:
    if series.T < 2:
        raise ValueError("need at least 2 time steps to fit a normalizer")
    mean = series.values.mean(axis=0)
    # exact mean for constant columns so they normalize to exact zeros
    const = np.all(series.values == series.values[0], axis=0)
    mean[const] = series.values[0, const]
    std = np.maximum(series.values.std(axis=0), STD_FLOOR)
    return Normalizer(mean, std)


def apply(normalizer: Normalizer, series: GridSeries) -> GridSeries:
    return normalizer.apply(series)


def invert(normalizer: Normalizer, series: GridSeries) -> GridSeries:
    return normalizer.invert(series)
