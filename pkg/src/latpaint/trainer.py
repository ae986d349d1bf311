"""Minimal adversarial trainer for the MLP generator/discriminator pair.

It exists so the inpainting pipeline has a learned (non-analytic) model to
run against; sample quality is not a goal. Real data come from the blob
renderer with freshly drawn latents every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .generators import BlobGenerator, BlobGeneratorSpec, Mlp, MlpDiscriminator, MlpGenerator, save_mlp
from .optim import Adam

log = logging.getLogger(__name__)

LOG_EPS = 1e-6


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    steps: int = 2000
    lr_g: float = 2e-3
    lr_d: float = 2e-4
    latent_dim: int = 8
    hidden: int = 64
    seed: int = 0
    dataset: BlobGeneratorSpec = field(default_factory=lambda: BlobGeneratorSpec(
        n_blobs=2, height=16, width=16, sigma_min=1.5, sigma_max=4.0))

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_g < 0 or self.lr_d < 0:
            raise ValueError("learning rates must be >= 0")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        s = self.dataset
        return (s.height, s.width, s.channels)


@dataclass
class GanState:
    g: Mlp
    d: Mlp
    g_opt: list[Adam]
    d_opt: list[Adam]

    @classmethod
    def init(cls, config: TrainConfig) -> "GanState":
        rng = np.random.default_rng([config.seed, 0])
        n_pix = int(np.prod(config.image_shape))
        g = Mlp.init([config.latent_dim, config.hidden, config.hidden, n_pix], ["tanh"] * 3, rng)
        d = Mlp.init([n_pix, config.hidden, 1], ["tanh", "sigmoid"], rng)
        return cls(g, d, _adams(g), _adams(d))


def _adams(mlp: Mlp) -> list[Adam]:
    return [Adam(p.shape) for layer in mlp.layers for p in (layer.weight, layer.bias)]


def _apply(mlp: Mlp, opts: list[Adam], grads, lr: float) -> None:
    flat = [g for pair in grads for g in pair]
    params = [(layer, name) for layer in mlp.layers for name in ("weight", "bias")]
    for (layer, name), opt, g in zip(params, opts, flat):
        setattr(layer, name, getattr(layer, name) + opt.step(g, lr))


def _clog(x):
    return np.log(np.clip(x, LOG_EPS, 1.0 - LOG_EPS))


def gan_step(state: GanState, real: np.ndarray, z: np.ndarray, config: TrainConfig):
    """One simultaneous update of both players on the minimax value function.

    ``real`` is a ``(B, H*W*C)`` batch, ``z`` a ``(B, d)`` batch of latents.
    The discriminator ascends ``mean log D(x) + mean log(1 - D(G(z)))`` and
    the generator descends ``mean log(1 - D(G(z)))``; both gradients are
    taken at the current parameters before either update is applied.
    Returns ``(d_loss, g_loss)`` where ``d_loss`` is the value function.
    """
    b_real, b_fake = len(real), len(z)
    fake, g_acts = state.g.forward(z, keep=True)
    d_real, dr_acts = state.d.forward(real, keep=True)
    d_fake, df_acts = state.d.forward(fake, keep=True)

    g_loss = float(_clog(1.0 - d_fake).mean())
    d_loss = float(_clog(d_real).mean()) + g_loss
    if not (math.isfinite(d_loss) and math.isfinite(g_loss)):
        raise TrainingError(f"non-finite loss (d={d_loss}, g={g_loss})")

    # descent direction for D is -V
    dr = np.clip(d_real, LOG_EPS, 1.0 - LOG_EPS)
    df = np.clip(d_fake, LOG_EPS, 1.0 - LOG_EPS)
    _, gr = state.d.backward(dr_acts, -1.0 / (b_real * dr), params=True)
    _, gf = state.d.backward(df_acts, 1.0 / (b_fake * (1.0 - df)), params=True)
    d_grads = [(a[0] + b[0], a[1] + b[1]) for a, b in zip(gr, gf)]

    g_img = state.d.backward(df_acts, -1.0 / (b_fake * (1.0 - df)))
    _, g_grads = state.g.backward(g_acts, g_img, params=True)

    for grads in (d_grads, g_grads):
        for gw, gb in grads:
            if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
                raise TrainingError("non-finite parameter gradient")

    _apply(state.d, state.d_opt, d_grads, config.lr_d)
    _apply(state.g, state.g_opt, g_grads, config.lr_g)
    return d_loss, g_loss


def real_batch(data_gen: BlobGenerator, n: int, rng) -> np.ndarray:
    zs = rng.uniform(-1.0, 1.0, (n, data_gen.latent_dim))
    return data_gen.forward_batch(zs).reshape(n, -1)


def discriminator_accuracy(state: GanState, config: TrainConfig, n: int = 256, seed: int = 12345) -> float:
    """Held-out accuracy of D on a balanced real/generated set."""
    rng = np.random.default_rng(seed)
    real = real_batch(BlobGenerator(config.dataset), n, rng)
    fake = state.g.forward(rng.uniform(-1.0, 1.0, (n, config.latent_dim)))
    hits = (state.d.forward(real)[:, 0] > 0.5).sum() + (state.d.forward(fake)[:, 0] < 0.5).sum()
    return float(hits) / (2 * n)


@dataclass
class TrainResult:
    generator: MlpGenerator
    discriminator: MlpDiscriminator
    d_losses: list[float]
    g_losses: list[float]


def train(config: TrainConfig = TrainConfig(), out_prefix=None, log_every: int = 200) -> TrainResult:
    """Run ``config.steps`` simultaneous steps; optionally write
    ``<prefix>_G.lgw/.json`` and ``<prefix>_D.lgw/.json``."""
    state = GanState.init(config)
    data_gen = BlobGenerator(config.dataset)
    rng = np.random.default_rng([config.seed, 1])
    d_hist, g_hist = [], []
    for step in range(config.steps):
        real = real_batch(data_gen, config.batch_size, rng)
        z = rng.uniform(-1.0, 1.0, (config.batch_size, config.latent_dim))
        try:
            d_loss, g_loss = gan_step(state, real, z, config)
        except TrainingError as exc:
            raise TrainingError(f"step {step}: {exc}") from None
        d_hist.append(d_loss)
        g_hist.append(g_loss)
        if log_every and step % log_every == 0:
            log.info("step %d  d_loss %.4f  g_loss %.4f", step, d_loss, g_loss)
    G = MlpGenerator(Mlp(state.g.layers), config.image_shape)
    D = MlpDiscriminator(Mlp(state.d.layers), config.image_shape)
    if out_prefix is not None:
        prefix = Path(out_prefix)
        save_mlp(G, prefix.parent / f"{prefix.name}_G")
        save_mlp(D, prefix.parent / f"{prefix.name}_D")
    return TrainResult(G, D, d_hist, g_hist)
