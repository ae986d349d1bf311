"""Objectives of the latent search and of pool retrieval.

Every ``|.|`` is an elementwise L1 *sum*. Latent-differentiable losses
return ``(value, grad)``; L1 subgradients use ``sign(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .tensor import ShapeError, check_pair, grad_x, grad_y, l1_sum, mask_apply

D_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.01  # perceptual term
    gamma: float = 0.01  # structure term of the retrieval distance
    mu: float = 0.1  # group consistency

    def __post_init__(self):
        for name in ("lam", "gamma", "mu"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


def fidelity_loss(z, image, mask, G):
    """``sum |M * (I - G(z))|`` and its subgradient in ``z``.

    Only ``M * I`` is ever read, so pixels under the hole may hold anything.
    """
    check_pair(image, mask)
    gen = G.forward(z)
    if gen.shape != image.shape:
        raise ShapeError(f"generator output {gen.shape} != image {image.shape}")
    m = mask[:, :, None]
    r = m * (image - gen)
    value = float(np.abs(r).sum())
    grad = G.vjp(z, -m * np.sign(r))
    return value, grad


def perceptual_loss(z, G, D):
    """``log(1 - D(G(z)))`` with the discriminator output clamped away from 0 and 1."""
    gen = G.forward(z)
    d = D.forward(gen)
    dc = min(max(d, D_EPS), 1.0 - D_EPS)
    value = math.log1p(-dc)
    if dc != d:
        return value, np.zeros(G.latent_dim)
    g_img = D.vjp(gen, -1.0 / (1.0 - d))
    return value, G.vjp(z, g_img)


def total_objective(z, image, mask, G, D, weights: LossWeights = LossWeights()):
    """``J = L_f + lam * L_p``."""
    vf, gf = fidelity_loss(z, image, mask, G)
    if weights.lam == 0.0:
        return vf, gf
    vp, gp = perceptual_loss(z, G, D)
    return vf + weights.lam * vp, gf + weights.lam * gp


def data_loss(damaged, mask, candidate) -> float:
    """Intensity mismatch ``sum |I_d - M * p|``."""
    return l1_sum(damaged, mask_apply(candidate, mask))


def structure_loss(damaged, mask, candidate) -> float:
    """Gradient-domain mismatch between ``I_d`` and ``M * p``."""
    mp = mask_apply(candidate, mask)
    return l1_sum(grad_x(damaged), grad_x(mp)) + l1_sum(grad_y(damaged), grad_y(mp))


def nn_matching_loss(damaged, mask, candidate, gamma: float = 0.01) -> float:
    return data_loss(damaged, mask, candidate) + gamma * structure_loss(damaged, mask, candidate)


def group_consistency_loss(zs: Sequence[np.ndarray], window: int | None = None):
    """Pairwise L1 disagreement ``sum_{i<k} |z_i - z_k|`` within one window.

    Returns ``(value, grads)`` with one gradient per latent.
    """
    zs = [np.asarray(z, dtype=np.float64) for z in zs]
    if not zs or (window is not None and len(zs) > window):
        raise ValueError(f"need 1..{window} latents, got {len(zs)}")
    dim = zs[0].shape
    if any(z.shape != dim for z in zs):
        raise ShapeError("latents in a window must share one dimension")
    value = 0.0
    grads = [np.zeros(dim) for _ in zs]
    for i, k in combinations(range(len(zs)), 2):
        d = zs[i] - zs[k]
        value += float(np.abs(d).sum())
        s = np.sign(d)
        grads[i] += s
        grads[k] -= s
    return value, grads


def group_consistency_stacked(z: np.ndarray):
    """Vectorised :func:`group_consistency_loss` for an ``(n, d)`` stack."""
    d = z[:, None, :] - z[None, :, :]
    value = 0.5 * float(np.abs(d).sum())
    return value, np.sign(d).sum(axis=1)
