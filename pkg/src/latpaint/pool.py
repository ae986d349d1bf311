"""Pre-generated (latent, image) pool and nearest-neighbour initialisation."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .generators import GeneratorModel, sample_latent
from .losses import nn_matching_loss
from .tensor import ShapeError, check_pair, mask_apply

POOL_MAGIC = b"LPOOL1"
_HEADER = struct.Struct("<6s5I32s")


@dataclass(frozen=True)
class Pool:
    latents: np.ndarray  # (N, d)
    images: np.ndarray  # (N, H, W, C)
    fingerprint: str  # sha256 hex of the generator

    def __post_init__(self):
        if len(self.latents) < 1:
            raise ValueError("a pool needs at least one entry")
        if len(self.latents) != len(self.images):
            raise ShapeError("latent and image counts differ")

    def __len__(self) -> int:
        return len(self.latents)

    def prefix(self, n: int) -> "Pool":
        return Pool(self.latents[:n], self.images[:n], self.fingerprint)

    def to_bytes(self) -> bytes:
        n, d = self.latents.shape
        h, w, c = self.images.shape[1:]
        head = _HEADER.pack(POOL_MAGIC, n, d, h, w, c, bytes.fromhex(self.fingerprint))
        return head + self.latents.astype("<f4").tobytes() + self.images.astype("<f4").tobytes()

    def save(self, path) -> Path:
        """Write the ``.lpool`` file: a little-endian header
        ``(b"LPOOL1", N, d, H, W, C, sha256[32])`` followed by N*d latent
        floats and N*H*W*C image floats, all f32."""
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path


def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def build_pool(G: GeneratorModel, n: int = 300, seed: int = 0) -> Pool:
    """Sample ``n`` latents and render them.

    Latents and images are rounded to float32 precision so the in-memory
    pool is identical to one read back from disk.
    """
    if n < 1:
        raise ValueError("pool size must be >= 1")
    rng = np.random.default_rng(seed)
    latents = _f32(np.stack([sample_latent(rng, G.latent_dim) for _ in range(n)]))
    images = _f32(G.forward_batch(latents))
    return Pool(latents, images, G.fingerprint())


def load_pool(path, G: GeneratorModel, spot_checks: int = 3) -> Pool:
    """Read an ``.lpool`` file and verify it against generator ``G``."""
    buf = Path(path).read_bytes()
    if len(buf) < _HEADER.size or buf[:6] != POOL_MAGIC:
        raise ValueError(f"{path}: not an LPOOL1 file")
    _, n, d, h, w, c, fp = _HEADER.unpack_from(buf)
    expected = _HEADER.size + 4 * n * (d + h * w * c)
    if len(buf) != expected:
        raise ValueError(f"{path}: size {len(buf)} does not match header ({expected})")
    if fp.hex() != G.fingerprint():
        raise ValueError(f"{path}: pool was built with a different generator")
    if d != G.latent_dim or (h, w, c) != tuple(G.shape):
        raise ShapeError(f"{path}: pool geometry does not match generator")
    off = _HEADER.size
    latents = np.frombuffer(buf, "<f4", n * d, off).reshape(n, d).astype(np.float64)
    off += 4 * n * d
    images = np.frombuffer(buf, "<f4", n * h * w * c, off).reshape(n, h, w, c).astype(np.float64)
    for i in np.linspace(0, n - 1, min(spot_checks, n)).astype(int):
        if not np.allclose(G.forward(latents[i]), images[i], atol=1e-5):
            raise ValueError(f"{path}: entry {i} does not match G(z)")
    return Pool(latents, images, fp.hex())


class NNInit(NamedTuple):
    z: np.ndarray
    index: int
    loss: float


def nn_init(damaged: np.ndarray, mask: np.ndarray, pool: Pool, gamma: float = 0.01) -> NNInit:
    """Exhaustive argmin of the retrieval distance over the pool.

    Ties go to the lowest index.
    """
    if len(pool) == 0:
        raise ValueError("empty pool")
    check_pair(damaged, mask)
    if pool.images.shape[1:] != damaged.shape:
        raise ShapeError(f"pool images {pool.images.shape[1:]} != image {damaged.shape}")
    best_i, best = -1, np.inf
    for i, p in enumerate(pool.images):
        loss = nn_matching_loss(damaged, mask, p, gamma)
        if loss < best:
            best_i, best = i, loss
    return NNInit(pool.latents[best_i].copy(), best_i, best)


class CurvePoint(NamedTuple):
    n: int
    ms_ssim: float
    nn_loss: float
    index: int


def pool_quality_curve(G: GeneratorModel, damaged, mask, sizes: Sequence[int], seed: int = 0,
                       gamma: float = 0.01, pool: Pool | None = None) -> list[CurvePoint]:
    """Best-match quality as the pool grows through nested prefixes.

    Quality is MS-SSIM between the masked best match and the damaged image.
    """
    from .metrics import ms_ssim

    sizes = list(sizes)
    if sizes != sorted(sizes) or not sizes or sizes[0] < 1:
        raise ValueError("sizes must be ascending positive counts")
    if pool is None:
        pool = build_pool(G, sizes[-1], seed)
    elif len(pool) < sizes[-1]:
        raise ValueError("pool smaller than the largest requested size")
    out = []
    for n in sizes:
        res = nn_init(damaged, mask, pool.prefix(n), gamma)
        q = ms_ssim(mask_apply(pool.images[res.index], mask), damaged)
        out.append(CurvePoint(n, q, res.loss, res.index))
    return out
