"""Single-image inpainting and the video scheduler.

Sequence modes:

``independent``
    every frame is inpainted on its own with a fresh initialisation.
``reuse``
    frames are split into consecutive windows of ``window`` frames whose
    first frame is the pivot. The first pivot uses the configured
    initialisation; every later frame starts from the previous frame's
    solution. Pivots get the full iteration budget, other frames a reduced
    one.
``reuse+group``
    ``reuse`` followed, per window, by a joint refinement of the non-pivot
    latents under the group consistency penalty, with the pivot latent as a
    fixed anchor. When ``mu == 0`` the penalty vanishes and so does the
    refinement, which makes the mode coincide with ``reuse``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .generators import DiscriminatorModel, GeneratorModel, sample_latent
from .losses import LossWeights, total_objective
from .optim import OptimConfig, Trajectory, iterations_to_saturation, optimize_single, optimize_window
from .pool import Pool, nn_init
from .tensor import ShapeError, as_mask, check_pair, mask_apply

MODES = ("independent", "reuse", "reuse+group")
INITS = ("random", "pool")


@dataclass(frozen=True)
class InpaintConfig:
    weights: LossWeights = LossWeights()
    optim: OptimConfig = OptimConfig()
    init: str = "random"
    pool: Pool | None = field(default=None, repr=False, compare=False)
    window: int = 5
    nonpivot_iters: int | None = None  # defaults to max_iters // 10
    refine_iters: int | None = None  # group pass; defaults to nonpivot budget
    pivot_init: str = "reuse"  # or "pool": re-run retrieval at later pivots

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.pivot_init not in ("reuse", "pool"):
            raise ValueError("pivot_init must be 'reuse' or 'pool'")
        if "pool" in (self.init, self.pivot_init) and self.pool is None:
            raise ValueError("pool initialisation requires a pool")

    @property
    def nonpivot_budget(self) -> int:
        return self.nonpivot_iters or max(1, self.optim.max_iters // 10)

    @property
    def refine_budget(self) -> int:
        return self.refine_iters or self.nonpivot_budget


@dataclass
class InpaintResult:
    image: np.ndarray
    z: np.ndarray
    trajectory: Trajectory
    init: dict

    @property
    def iterations_to_saturation(self) -> int:
        return iterations_to_saturation(self.trajectory)


def blend(image, mask, G: GeneratorModel, z) -> np.ndarray:
    """``M * I + (1 - M) * G(z)``; known pixels are copied, not recomputed."""
    check_pair(image, as_mask(mask))
    gen = G.forward(z)
    m = mask[:, :, None].astype(bool)
    return np.where(m, image, gen)


def _objective(image, mask, G, D, weights):
    damaged = mask_apply(image, mask)
    return lambda z: total_objective(z, damaged, mask, G, D, weights)


def _initial(image, mask, G, config: InpaintConfig, rng):
    if config.init == "pool":
        res = nn_init(mask_apply(image, mask), mask, config.pool, config.weights.gamma)
        return res.z, {"strategy": "pool", "pool_index": res.index, "nn_loss": res.loss}
    return sample_latent(rng, G.latent_dim), {"strategy": "random"}


def inpaint_image(image, mask, G: GeneratorModel, D: DiscriminatorModel,
                  config: InpaintConfig = InpaintConfig(), z0=None, max_iters: int | None = None,
                  rng=None) -> InpaintResult:
    """Search the latent space for the best match to the known pixels, then blend.

    ``z0`` overrides the configured initialisation (used for warm starts);
    ``rng`` defaults to ``config.optim.seed``.
    """
    check_pair(image, mask)
    if tuple(G.shape) != image.shape:
        raise ShapeError(f"generator produces {G.shape}, image is {image.shape}")
    if z0 is None:
        z0, meta = _initial(image, mask, G, config, np.random.default_rng(
            config.optim.seed if rng is None else rng))
    else:
        meta = {"strategy": "warm"}
    optim = config.optim if max_iters is None else replace(config.optim, max_iters=max_iters)
    z_hat, traj = optimize_single(z0, _objective(image, mask, G, D, config.weights), optim)
    return InpaintResult(blend(image, mask, G, z_hat), z_hat, traj, meta)


def _check_frames(frames):
    if not frames:
        raise ValueError("empty sequence")
    shape = frames[0][0].shape
    for t, (img, m) in enumerate(frames):
        if img.shape != shape:
            raise ShapeError(f"frame {t} has shape {img.shape}, expected {shape}")
        check_pair(img, m)


def inpaint_sequence(frames: Sequence[tuple[np.ndarray, np.ndarray]], G: GeneratorModel,
                     D: DiscriminatorModel, config: InpaintConfig = InpaintConfig(),
                     mode: str = "reuse") -> list[InpaintResult]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    frames = list(frames)
    _check_frames(frames)
    seed = config.optim.seed
    rngs = [np.random.default_rng(seed if t == 0 else [seed, t]) for t in range(len(frames))]

    if mode == "independent":
        return [inpaint_image(img, m, G, D, config, rng=rngs[t])
                for t, (img, m) in enumerate(frames)]

    results: list[InpaintResult] = []
    for t, (img, m) in enumerate(frames):
        pivot = t % config.window == 0
        if t == 0:
            res = inpaint_image(img, m, G, D, config, rng=rngs[0])
            res.init["role"] = "pivot"
        elif pivot and config.pivot_init == "pool":
            res = inpaint_image(img, m, G, D, replace(config, init="pool"))
            res.init["role"] = "pivot"
        else:
            res = inpaint_image(img, m, G, D, config, z0=results[-1].z,
                                max_iters=None if pivot else config.nonpivot_budget)
            res.init["role"] = "pivot" if pivot else "warm"
        results.append(res)

        window_end = (t + 1) % config.window == 0 or t == len(frames) - 1
        if mode == "reuse+group" and window_end and config.weights.mu != 0.0:
            _refine_window(frames, results, t - (t % config.window), G, D, config)
    return results


def _refine_window(frames, results, start, G, D, config):
    """Jointly refine frames ``start+1 .. end`` anchored at pivot ``start``."""
    idx = list(range(start, len(results)))
    if len(idx) < 2:
        return
    objectives = [_objective(*frames[i], G, D, config.weights) for i in idx]
    optim = replace(config.optim, max_iters=config.refine_budget, schedule="cosine")
    zs, traj = optimize_window([results[i].z for i in idx], objectives, config.weights.mu,
                               optim, frozen=1)
    for j, i in enumerate(idx[1:], start=1):
        r = results[i]
        img, m = frames[i]
        r.z = zs[j]
        r.image = blend(img, m, G, zs[j])
        r.init["group_refine"] = {"iterations": traj.iterations,
                                  "final": float(traj.frame_values[-1, j])}
