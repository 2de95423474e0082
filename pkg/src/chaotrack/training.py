"""Window construction, the training objective and an Adam training loop.

Per sample the objective is::

    ||x_hat + delta_hat - x||^2 + ||delta_hat - delta||^2 + kl_weight * KL(q(z) || N(0, I))

and a batch loss is the mean of the per-sample totals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data.grid import GridSeries
from .errors import NonFiniteError, ShapeError, TrainingDivergedError
from .model import ModelConfig, ModelOutput, ModelParams, build_loss_graph, init_params
from .numcore import backward, forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    kl_weight: float = 1.0
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not all(0.0 < b < 1.0 for b in self.adam_betas):
            raise ValueError("adam_betas must lie in (0, 1)")
        if self.adam_eps <= 0 or self.kl_weight < 0:
            raise ValueError("adam_eps must be > 0 and kl_weight >= 0")


@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray
    target: np.ndarray
    target_delta: np.ndarray
    index: int


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    delta: float
    kl: float
    total: float


def make_windows(series: GridSeries | np.ndarray, d: int) -> list[WindowSample]:
    """All ``T - d`` (window, next row) pairs in time order.

    Sample ``k`` has input rows ``k..k+d-1`` flattened row-major and target
    row ``k+d``; ``index`` is ``k+d``.
    """
    values = series.values if isinstance(series, GridSeries) else np.asarray(series, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    if d < 1:
        raise ValueError("window length d must be >= 1")
    if T < d + 1:
        raise ShapeError(f"series has {T} steps; window d={d} needs at least {d + 1}")
    samples = []
    for k in range(T - d):
        inp = values[k:k + d].reshape(-1).copy()
        target = values[k + d].copy()
        samples.append(WindowSample(inp, target, target - values[k + d - 1], k + d))
    return samples


def stack_windows(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.stack([s.input for s in samples]),
        np.stack([s.target for s in samples]),
        np.stack([s.target_delta for s in samples]),
    )


def kl_std_normal(mu: np.ndarray, sigma: np.ndarray) -> float:
    """Closed-form KL(N(mu, diag sigma^2) || N(0, I))."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise ValueError("sigma must be strictly positive")
    var = sigma * sigma
    return float(0.5 * np.sum(mu * mu + var - np.log(var) - 1.0))


def raw_equivalent_kl_weight(std: np.ndarray) -> float:
    """KL weight that makes the normalized-space objective proportional to the
    unit-weight objective measured in the data's original units.

    With ``x = mean + std * u`` the squared-error terms scale by ``std**2``,
    so ``||.||^2_raw + KL`` is proportional to ``||.||^2_norm + KL / std**2``.
    Per-location scales are averaged.
    """
    std = np.asarray(std, dtype=np.float64)
    return float(1.0 / np.mean(std * std))


def loss(output: ModelOutput, sample: WindowSample, kl_weight: float = 1.0) -> LossBreakdown:
    if output.combined.shape != sample.target.shape:
        raise ShapeError(
            f"model output has shape {output.combined.shape}, target {sample.target.shape}"
        )
    recon = float(np.sum((output.combined - sample.target) ** 2))
    delta = float(np.sum((output.delta_hat - sample.target_delta) ** 2))
    kl = kl_std_normal(output.latent.mu, output.latent.sigma)
    return LossBreakdown(recon, delta, kl, recon + delta + kl_weight * kl)


class Adam:
    """Adam over a dict of named arrays; updates in place, in key order."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


class LossFunction:
    """Batch objective and its gradient, caching one graph per batch size."""

    def __init__(self, config: ModelConfig, kl_weight: float = 1.0):
        self.config = config
        self.kl_weight = kl_weight
        self._graphs = {}

    def _graph(self, batch_size: int):
        if batch_size not in self._graphs:
            self._graphs[batch_size] = build_loss_graph(self.config, batch_size, self.kl_weight)
        return self._graphs[batch_size]

    def __call__(self, params: ModelParams, windows, targets, deltas, eps, with_grad=True):
        lg = self._graph(len(windows))
        bindings = dict(params.named())
        bindings.update(window=windows, target=targets, target_delta=deltas, epsilon=eps)
        values = forward(lg.graph, bindings)
        parts = LossBreakdown(
            float(values[lg.recon]),
            float(values[lg.delta]),
            float(values[lg.kl]),
            float(values[lg.total]),
        )
        if not with_grad:
            return parts, None
        return parts, backward(lg.graph, values, lg.total)


def train(
    series: GridSeries | np.ndarray,
    model_config: ModelConfig,
    train_config: TrainConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, list[LossBreakdown]]:
    """Fit the model with Adam; returns trained params and per-epoch mean losses.

    ``series`` is expected to be normalized already. Initialization uses
    ``model_config.seed``; shuffling and reparameterization noise use two
    independent streams spawned from ``train_config.seed``.
    """
    samples = make_windows(series, model_config.window)
    windows, targets, deltas = stack_windows(samples)
    if windows.shape[1] != model_config.input_dim:
        raise ShapeError(
            f"series has {windows.shape[1] // model_config.window} locations, "
            f"model expects {model_config.n_locations}"
        )
    params = init_params(model_config) if params is None else params.copy()
    named = params.named()
    opt = Adam(named, train_config.learning_rate, train_config.adam_betas, train_config.adam_eps)
    shuffle_rng, eps_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(train_config.seed).spawn(2)
    )
    objective = LossFunction(model_config, train_config.kl_weight)
    n = len(samples)
    bs = train_config.batch_size
    history = []
    for epoch in range(train_config.epochs):
        order = shuffle_rng.permutation(n) if train_config.shuffle else np.arange(n)
        sums = np.zeros(4)
        for batch, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            eps = eps_rng.standard_normal((len(idx), model_config.latent_dim))
            try:
                parts, grads = objective(params, windows[idx], targets[idx], deltas[idx], eps)
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, batch, str(exc)) from None
            if not np.isfinite(parts.total):
                raise TrainingDivergedError(epoch, batch)
            opt.step(named, grads)
            sums += len(idx) * np.array([parts.recon, parts.delta, parts.kl, parts.total])
        mean = sums / n
        history.append(LossBreakdown(*map(float, mean)))
        log.debug("epoch %d total %.6f", epoch, mean[3])
    return params, history
