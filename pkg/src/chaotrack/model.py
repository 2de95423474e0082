"""Two-component next-step predictor.

The dependency-learning component (DLC) maps a flattened window of ``d`` past
observation vectors to the next vector. The information-tracking component
(ITC) encodes the same window into a diagonal Gaussian latent, samples it by
reparameterization and decodes an estimate of the next first-order
difference. The model output is their sum.

Layers compute ``x @ W + b`` with ``W`` of shape ``(fan_in, fan_out)``.
Hidden layers use tanh; output layers and the latent heads are linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ShapeError
from .numcore import CompGraph, GraphBuilder

Layer = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    n_locations: int
    window: int
    dlc_hidden: tuple[int, ...] = (64, 64)
    itc_encoder_hidden: tuple[int, ...] = (64,)
    latent_dim: int = 16
    itc_decoder_hidden: tuple[int, ...] = (64,)
    seed: int = 0
    logvar_clamp: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        # normalise lists coming from JSON
        for name in ("dlc_hidden", "itc_encoder_hidden", "itc_decoder_hidden", "logvar_clamp"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_locations < 1 or self.window < 1 or self.latent_dim < 1:
            raise ValueError("n_locations, window and latent_dim must be >= 1")
        if any(w < 1 for w in self.dlc_hidden + self.itc_encoder_hidden + self.itc_decoder_hidden):
            raise ValueError("hidden widths must be >= 1")
        lo, hi = self.logvar_clamp
        if not lo < hi:
            raise ValueError("logvar_clamp must satisfy lo < hi")

    @property
    def input_dim(self) -> int:
        return self.window * self.n_locations

    @property
    def encoder_dim(self) -> int:
        """Width of the hidden representation r."""
        return self.itc_encoder_hidden[-1] if self.itc_encoder_hidden else self.input_dim

    def layer_shapes(self) -> dict[str, list[tuple[int, int]]]:
        def chain(widths):
            return list(zip(widths[:-1], widths[1:]))

        n, k = self.n_locations, self.latent_dim
        return {
            "dlc": chain([self.input_dim, *self.dlc_hidden, n]),
            "encoder": chain([self.input_dim, *self.itc_encoder_hidden]),
            "mu_head": [(self.encoder_dim, k)],
            "logvar_head": [(self.encoder_dim, k)],
            "decoder": chain([k, *self.itc_decoder_hidden, n]),
        }


GROUPS = ("dlc", "encoder", "mu_head", "logvar_head", "decoder")


@dataclass
class ModelParams:
    dlc: list[Layer]
    encoder: list[Layer]
    mu_head: Layer
    logvar_head: Layer
    decoder: list[Layer]
    logvar_clamp: tuple[float, float] = (-10.0, 10.0)

    def layers(self, group: str) -> list[Layer]:
        value = getattr(self, group)
        return [value] if group in ("mu_head", "logvar_head") else value

    def named(self) -> dict[str, np.ndarray]:
        """Flat ``{"dlc.0.W": ..., "dlc.0.b": ...}`` view in a fixed order."""
        out = {}
        for group in GROUPS:
            for i, (w, b) in enumerate(self.layers(group)):
                out[f"{group}.{i}.W"] = w
                out[f"{group}.{i}.b"] = b
        return out

    @classmethod
    def from_named(cls, config: ModelConfig, arrays: dict[str, np.ndarray]) -> "ModelParams":
        shapes = config.layer_shapes()
        groups = {}
        for group in GROUPS:
            layers = []
            for i, (fan_in, fan_out) in enumerate(shapes[group]):
                w = np.asarray(arrays[f"{group}.{i}.W"], dtype=np.float64)
                b = np.asarray(arrays[f"{group}.{i}.b"], dtype=np.float64)
                if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                    raise ShapeError(
                        f"{group}.{i}: expected W {(fan_in, fan_out)} and b {(fan_out,)}, "
                        f"got {w.shape} and {b.shape}"
                    )
                layers.append((w, b))
            groups[group] = layers
        groups["mu_head"] = groups["mu_head"][0]
        groups["logvar_head"] = groups["logvar_head"][0]
        return cls(**groups, logvar_clamp=config.logvar_clamp)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.named().values()])

    def with_flat(self, config: ModelConfig, vec: np.ndarray) -> "ModelParams":
        named = self.named()
        expected = sum(a.size for a in named.values())
        if len(vec) != expected:
            raise ShapeError(f"flat vector has {len(vec)} entries, expected {expected}")
        arrays, pos = {}, 0
        for name, a in named.items():
            arrays[name] = np.asarray(vec[pos:pos + a.size], dtype=np.float64).reshape(a.shape)
            pos += a.size
        return ModelParams.from_named(config, arrays)

    def copy(self) -> "ModelParams":
        return ModelParams(
            dlc=[(w.copy(), b.copy()) for w, b in self.dlc],
            encoder=[(w.copy(), b.copy()) for w, b in self.encoder],
            mu_head=(self.mu_head[0].copy(), self.mu_head[1].copy()),
            logvar_head=(self.logvar_head[0].copy(), self.logvar_head[1].copy()),
            decoder=[(w.copy(), b.copy()) for w, b in self.decoder],
            logvar_clamp=self.logvar_clamp,
        )


@dataclass(frozen=True)
class GaussianLatent:
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class ModelOutput:
    x_hat: np.ndarray
    delta_hat: np.ndarray
    combined: np.ndarray
    latent: GaussianLatent = field(repr=False)


def init_params(config: ModelConfig) -> ModelParams:
    """Xavier-uniform weights from ``config.seed``, zero biases."""
    rng = np.random.default_rng(config.seed)
    groups = {}
    for group, shapes in config.layer_shapes().items():
        layers = []
        for fan_in, fan_out in shapes:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append((w, np.zeros(fan_out)))
        groups[group] = layers
    groups["mu_head"] = groups["mu_head"][0]
    groups["logvar_head"] = groups["logvar_head"][0]
    return ModelParams(**groups, logvar_clamp=config.logvar_clamp)


def _mlp(layers: list[Layer], x: np.ndarray, linear_last: bool) -> np.ndarray:
    for i, (w, b) in enumerate(layers):
        if x.shape[-1] != w.shape[0]:
            raise ShapeError(f"layer {i} expects width {w.shape[0]}, got {x.shape[-1]}")
        x = x @ w + b
        if not (linear_last and i == len(layers) - 1):
            x = np.tanh(x)
    return x


def _check_window(params: ModelParams, window: np.ndarray) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    expected = params.dlc[0][0].shape[0]
    if window.shape[-1] != expected:
        raise ShapeError(f"window has length {window.shape[-1]}, model expects {expected}")
    return window


def dlc_forward(params: ModelParams, window: np.ndarray) -> np.ndarray:
    return _mlp(params.dlc, _check_window(params, window), linear_last=True)


def itc_encode(params: ModelParams, window: np.ndarray) -> np.ndarray:
    window = _check_window(params, window)
    return _mlp(params.encoder, window, linear_last=False)


def itc_latent(params: ModelParams, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of the approximate posterior.

    The variance head predicts a log-variance, clamped to
    ``params.logvar_clamp`` before exponentiation.
    """
    w_mu, b_mu = params.mu_head
    w_lv, b_lv = params.logvar_head
    mu = r @ w_mu + b_mu
    logvar = np.clip(r @ w_lv + b_lv, *params.logvar_clamp)
    return mu, np.exp(0.5 * logvar)


def itc_sample(mu: np.ndarray, sigma: np.ndarray, epsilon: np.ndarray) -> np.ndarray:
    mu, sigma, epsilon = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, epsilon))
    if not (mu.shape == sigma.shape == epsilon.shape):
        raise ShapeError(f"shape mismatch: mu {mu.shape}, sigma {sigma.shape}, eps {epsilon.shape}")
    return mu + sigma * epsilon


def itc_decode(params: ModelParams, z: np.ndarray) -> np.ndarray:
    return _mlp(params.decoder, np.asarray(z, dtype=np.float64), linear_last=True)


def model_forward(
    params: ModelParams,
    window: np.ndarray,
    mode: Literal["mean", "sample"] = "mean",
    epsilon: np.ndarray | None = None,
) -> ModelOutput:
    """Full forward pass. ``mode="sample"`` requires ``epsilon``; ``"mean"`` uses z = mu.

    Works on a single window (1-D) or a batch of windows (2-D).
    """
    x_hat = dlc_forward(params, window)
    r = itc_encode(params, window)
    mu, sigma = itc_latent(params, r)
    if mode == "mean":
        z = mu
    elif mode == "sample":
        if epsilon is None:
            raise ValueError("sample mode needs epsilon")
        z = itc_sample(mu, sigma, epsilon)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    delta_hat = itc_decode(params, z)
    return ModelOutput(x_hat, delta_hat, x_hat + delta_hat, GaussianLatent(mu, sigma, z))


@dataclass(frozen=True)
class LossGraph:
    """Graph computing the mean per-sample objective over a batch.

    Leaves: ``window``, ``target``, ``target_delta``, ``epsilon`` and one leaf
    per parameter array (names from :meth:`ModelParams.named`).
    """

    graph: CompGraph
    total: int
    recon: int
    delta: int
    kl: int
    combined: int
    batch_size: int


def build_loss_graph(config: ModelConfig, batch_size: int, kl_weight: float = 1.0) -> LossGraph:
    gb = GraphBuilder()
    window = gb.leaf("window")
    target = gb.leaf("target")
    target_delta = gb.leaf("target_delta")
    eps = gb.leaf("epsilon")

    def mlp(group, n_layers, x, linear_last):
        for i in range(n_layers):
            x = gb.add(gb.matmul(x, gb.leaf(f"{group}.{i}.W")), gb.leaf(f"{group}.{i}.b"))
            if not (linear_last and i == n_layers - 1):
                x = gb.tanh(x)
        return x

    shapes = config.layer_shapes()
    x_hat = mlp("dlc", len(shapes["dlc"]), window, True)
    r = mlp("encoder", len(shapes["encoder"]), window, False)
    mu = mlp("mu_head", 1, r, True)
    logvar = gb.clip(mlp("logvar_head", 1, r, True), *config.logvar_clamp)
    sigma = gb.exp(gb.scale(logvar, 0.5))
    z = gb.add(mu, gb.mul(sigma, eps))
    delta_hat = mlp("decoder", len(shapes["decoder"]), z, True)
    combined = gb.add(x_hat, delta_hat, name="combined")

    inv_b = 1.0 / batch_size
    recon = gb.scale(gb.sumsq(gb.sub(combined, target)), inv_b, name="recon")
    delta = gb.scale(gb.sumsq(gb.sub(delta_hat, target_delta)), inv_b, name="delta")
    # 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1), with sigma^2 = exp(logvar)
    kl_terms = gb.shift(gb.sub(gb.add(gb.mul(mu, mu), gb.exp(logvar)), logvar), -1.0)
    kl = gb.scale(gb.sum(kl_terms), 0.5 * inv_b, name="kl")
    total = gb.add(gb.add(recon, delta), gb.scale(kl, kl_weight), name="total")
    return LossGraph(gb.build(), total, recon, delta, kl, combined, batch_size)
