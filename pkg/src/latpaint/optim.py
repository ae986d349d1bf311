"""Adam-based latent search and the convergence-point detector."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .losses import group_consistency_stacked

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]

SCHEDULES = ("constant", "cosine")


class OptimizationError(RuntimeError):
    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 1000
    lr: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clamp_z: bool = True
    seed: int = 0
    schedule: str = "constant"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")

    def step_size(self, t: int) -> float:
        if self.schedule == "cosine":
            return self.lr * 0.5 * (1.0 + math.cos(math.pi * t / self.max_iters))
        return self.lr


@dataclass
class Trajectory:
    """Objective recorded before every update, plus the final latent(s).

    For window runs ``values`` holds the joint objective and ``frame_values``
    the per-frame data terms, shape ``(iterations, frames)``.
    """

    values: list[float]
    z: np.ndarray
    frame_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective"])
            for i, v in enumerate(self.values):
                w.writerow([i, repr(float(v))])


class Adam:
    """Elementwise Adam on an array of any shape."""

    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        """Return the update to add to the parameters."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return -lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _check(value, grad, it):
    if not math.isfinite(value):
        raise OptimizationError(f"objective is {value}", it)
    if not np.all(np.isfinite(grad)):
        raise OptimizationError("gradient has non-finite entries", it)


def optimize_single(z0: np.ndarray, objective: Objective, config: OptimConfig = OptimConfig()):
    """Minimise ``objective`` from ``z0`` for exactly ``config.max_iters`` steps.

    Returns ``(z_hat, trajectory)``; ``z_hat`` is the iterate after the last
    update.
    """
    z = np.array(z0, dtype=np.float64)
    opt = Adam(z.shape, config.beta1, config.beta2, config.eps)
    values = []
    for it in range(config.max_iters):
        value, grad = objective(z)
        _check(value, grad, it)
        values.append(float(value))
        z = z + opt.step(grad, config.step_size(it))
        if config.clamp_z:
            z = np.clip(z, -1.0, 1.0)
    return z, Trajectory(values, z.copy())


def optimize_window(z_inits: Sequence[np.ndarray], objectives: Sequence[Objective], mu: float,
                    config: OptimConfig = OptimConfig(), frozen: int = 0):
    """Jointly minimise ``sum_i J_i(z_i) + mu * L_G(z_1..z_n)``.

    The first ``frozen`` latents are held fixed: they take part in the
    consistency term as anchors but are not updated and their objectives
    are not evaluated. With ``mu == 0`` and ``frozen == 0`` every latent
    follows exactly the iterates of an independent :func:`optimize_single`.
    """
    if len(z_inits) != len(objectives) or not z_inits:
        raise ValueError("need one objective per latent and at least one latent")
    if not 0 <= frozen < len(z_inits):
        raise ValueError("at least one latent must be free")
    z = np.stack([np.asarray(z0, dtype=np.float64) for z0 in z_inits])
    free = slice(frozen, None)
    opt = Adam(z[free].shape, config.beta1, config.beta2, config.eps)
    values, frame_values = [], []
    for it in range(config.max_iters):
        fv = np.zeros(len(z))
        grad = np.zeros_like(z)
        for i in range(frozen, len(z)):
            fv[i], grad[i] = objectives[i](z[i])
        total = float(fv.sum())
        if mu != 0.0 and len(z) > 1:
            lg, g_lg = group_consistency_stacked(z)
            total += mu * lg
            grad = grad + mu * g_lg
        _check(total, grad[free], it)
        values.append(total)
        frame_values.append(fv)
        z[free] = z[free] + opt.step(grad[free], config.step_size(it))
        if config.clamp_z:
            z[free] = np.clip(z[free], -1.0, 1.0)
    return list(z), Trajectory(values, z.copy(), np.array(frame_values))


def iterations_to_saturation(values: Sequence[float] | Trajectory, fraction: float = 0.95) -> int:
    """First iteration whose objective has covered ``fraction`` of the run's
    total decrease, taking the final recorded value as saturation."""
    if isinstance(values, Trajectory):
        values = values.values
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty trajectory")
    sat = v[-1]
    if v[0] == sat:
        return 0
    threshold = sat + (1.0 - fraction) * (v[0] - sat)
    return int(np.flatnonzero(v <= threshold)[0])
