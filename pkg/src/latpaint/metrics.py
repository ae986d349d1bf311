"""Reconstruction quality and temporal consistency metrics.

Images live in [-1, 1], so the PSNR peak defaults to 2.0 and the MS-SSIM
data range is 2.0 as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import ndimage

from .tensor import ShapeError, as_mask

# Wang, Simoncelli & Bovik (2003) exponents, finest scale first.
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def psnr(a, b, peak: float = 2.0, cap: float = 100.0) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < peak**2 * 10.0 ** (-cap / 10.0):
        return cap
    return 10.0 * math.log10(peak**2 / mse)


def ms_ssim_scales(height: int, width: int) -> int:
    """Number of dyadic scales used for an image of the given size.

    Five scales need ``min(H, W) >= 32``; smaller images get
    ``1 + floor(log2(min(H, W) / 2))`` scales so the coarsest level is at
    least 2 pixels wide. Anything below 2 pixels is rejected.
    """
    m = min(height, width)
    if m < 2:
        raise ShapeError("image too small for MS-SSIM")
    return min(len(MS_SSIM_WEIGHTS), 1 + int(math.floor(math.log2(m / 2))))


def _ssim_terms(x, y, c1, c2, sigma):
    blur = lambda v: ndimage.gaussian_filter(v, sigma, mode="reflect", truncate=5.0 / sigma)
    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1)
    return float(lum.mean()), float(cs.mean())


def _downsample(x):
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim(a, b, data_range: float = 2.0, scales: int | None = None, sigma: float = 1.5) -> float:
    """Multi-scale SSIM averaged over channels, clamped to [0, 1].

    Uses an 11-tap Gaussian window (sigma 1.5) with reflected borders and 2x2
    average pooling between scales. When fewer than five scales fit, the
    leading exponents are renormalised to sum to one.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    n = scales or ms_ssim_scales(*a.shape[:2])
    w = np.array(MS_SSIM_WEIGHTS[:n])
    w = w / w.sum()
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    vals = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        prod = 1.0
        for s in range(n):
            lum, cs = _ssim_terms(x, y, c1, c2, sigma)
            term = max(cs, 0.0) if s < n - 1 else max(lum * cs, 0.0)
            prod *= term ** w[s]
            if s < n - 1:
                x, y = _downsample(x), _downsample(y)
        vals.append(prod)
    return float(min(max(np.mean(vals), 0.0), 1.0))


def temporal_consistency_eta(frames: Sequence[np.ndarray], **psnr_kw) -> float:
    """Mean PSNR over all unordered frame pairs (higher = more consistent)."""
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    vals = [psnr(frames[j], frames[k], **psnr_kw) for j, k in combinations(range(len(frames)), 2)]
    return float(np.mean(vals))


def flicker(frames: Sequence[np.ndarray]) -> float:
    """Mean absolute change between consecutive frames."""
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    return float(np.mean([np.mean(np.abs(np.asarray(frames[t + 1]) - np.asarray(frames[t])))
                          for t in range(len(frames) - 1)]))


@dataclass(frozen=True)
class MaskSpec:
    """Random rectangular hole covering ``coverage`` of the pixels."""

    coverage: float = 0.25
    min_side: int = 2

    def sample(self, height: int, width: int, rng) -> np.ndarray:
        area = self.coverage * height * width
        lo = max(self.min_side, int(math.ceil(area / width)))
        hi = min(height, int(area // self.min_side))
        if not 0 < self.coverage < 1 or lo > hi:
            raise ValueError(f"cannot place a {self.coverage:.0%} hole in {height}x{width}")
        h = int(rng.integers(lo, hi + 1))
        w = min(width, max(self.min_side, int(round(area / h))))
        y = int(rng.integers(0, height - h + 1))
        x = int(rng.integers(0, width - w + 1))
        m = np.ones((height, width))
        m[y : y + h, x : x + w] = 0.0
        return m


@dataclass(frozen=True)
class PseudoSequence:
    base: np.ndarray
    masks: tuple[np.ndarray, ...]
    seed: int

    @property
    def length(self) -> int:
        return len(self.masks)

    def frames(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.base, m) for m in self.masks]


def make_pseudo_sequence(base: np.ndarray, length: int, spec: MaskSpec = MaskSpec(), seed: int = 0,
                         max_tries: int = 1000) -> PseudoSequence:
    """Replicate ``base`` ``length`` times under distinct random masks."""
    if length < 2:
        raise ValueError("a pseudo-sequence needs at least two frames")
    rng = np.random.default_rng(seed)
    masks: list[np.ndarray] = []
    tries = 0
    while len(masks) < length:
        tries += 1
        if tries > max_tries:
            raise ValueError(f"could not draw {length} distinct masks")
        m = spec.sample(base.shape[0], base.shape[1], rng)
        if any(np.array_equal(m, prev) for prev in masks):
            continue
        masks.append(as_mask(m))
    return PseudoSequence(base, tuple(masks), seed)
