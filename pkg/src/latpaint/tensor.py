"""Rasters, masks and latents as validated numpy arrays.

Layout conventions used everywhere in the package:

* an image is a float64 array of shape ``(H, W, C)`` (channel-interleaved,
  row-major), values nominally in [-1, 1];
* a mask is a float64 array of shape ``(H, W)`` holding only 0.0 and 1.0,
  where 0 marks a damaged pixel; it broadcasts across channels;
* a latent is a 1-d float64 array.

The helpers below validate and normalise inputs; they return read-only
arrays so that validated objects can be shared freely.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when array shapes are inconsistent."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_image(data, *, check_range: bool = False) -> np.ndarray:
    """Validate ``data`` as an image and return a read-only float64 copy.

    2-d input is promoted to a single-channel image. With ``check_range``
    values outside [-1, 1] are rejected (used for dataset images and
    generator outputs; intermediate arithmetic is allowed to leave the range).
    """
    a = np.array(data, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3) or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"image must have shape (H, W, 1|3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    if check_range and (a.min() < -1.0 or a.max() > 1.0):
        raise ValueError("image values must lie in [-1, 1]")
    return _frozen(a)


def as_mask(data) -> np.ndarray:
    """Validate ``data`` as a binary mask (1 = known pixel, 0 = damaged)."""
    a = np.array(data, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim != 2:
        raise ShapeError(f"mask must have shape (H, W), got {a.shape}")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("mask values must be 0 or 1")
    if not a.any():
        raise ValueError("mask has no known pixels")
    return _frozen(a)


def as_latent(data, dim: int | None = None) -> np.ndarray:
    a = np.array(data, dtype=np.float64).reshape(-1)
    if dim is not None and a.size != dim:
        raise ShapeError(f"latent must have length {dim}, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ValueError("latent contains non-finite values")
    return a


def check_pair(image: np.ndarray, mask: np.ndarray) -> None:
    if image.shape[:2] != mask.shape:
        raise ShapeError(f"image {image.shape[:2]} and mask {mask.shape} differ in size")


def mask_apply(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Pointwise product ``M * I`` with the mask broadcast over channels."""
    check_pair(image, mask)
    return image * mask[:, :, None]


def grad_x(image: np.ndarray) -> np.ndarray:
    """Horizontal forward difference; the last column is zero."""
    if image.shape[1] < 2:
        raise ShapeError("grad_x needs width >= 2")
    out = np.zeros_like(image)
    out[:, :-1] = image[:, 1:] - image[:, :-1]
    return out


def grad_y(image: np.ndarray) -> np.ndarray:
    """Vertical forward difference; the last row is zero."""
    if image.shape[0] < 2:
        raise ShapeError("grad_y needs height >= 2")
    out = np.zeros_like(image)
    out[:-1] = image[1:] - image[:-1]
    return out


def grad_x_adjoint(g: np.ndarray) -> np.ndarray:
    """Transpose of :func:`grad_x`, for pulling cotangents back."""
    out = np.zeros_like(g)
    out[:, 1:] += g[:, :-1]
    out[:, :-1] -= g[:, :-1]
    return out


def grad_y_adjoint(g: np.ndarray) -> np.ndarray:
    out = np.zeros_like(g)
    out[1:] += g[:-1]
    out[:-1] -= g[:-1]
    return out


def l1_sum(a: np.ndarray, b: np.ndarray, weight: np.ndarray | None = None) -> float:
    """Sum of absolute differences, optionally weighted by a mask.

    ``weight`` may be image-shaped or an (H, W) mask broadcast over channels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    d = np.abs(a - b)
    if weight is not None:
        w = np.asarray(weight, dtype=np.float64)
        if w.ndim == a.ndim - 1:
            w = w[..., None]
        if w.shape[: a.ndim - 1] != a.shape[: a.ndim - 1]:
            raise ShapeError(f"weight {w.shape} does not match {a.shape}")
        d = d * w
    return float(d.sum())
