"""Decadal-style forecasting of chaotic series with a dependency-learning
predictor calibrated by a variational information-tracking component."""

__version__ = "0.1.0"
