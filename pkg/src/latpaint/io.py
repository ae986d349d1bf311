"""PNG images, masks and frame directories.

Pixel values map linearly from 8-bit ``[0, 255]`` to ``[-1, 1]`` on load;
saving inverts the map with round-half-up and clamping. Mask PNGs must
contain only 0 (damaged) and 255 (known).
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .tensor import ShapeError, as_image, as_mask

FRAME_RE = re.compile(r"^frame_(\d{4})\.png$")


def _read(path) -> np.ndarray:
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            if im.mode not in ("L", "RGB", "1"):
                raise OSError(f"unsupported PNG mode {im.mode!r} (need 8-bit grayscale or RGB)")
            if im.format != "PNG":
                raise OSError(f"not a PNG file ({im.format})")
            data = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise OSError(f"{path}: {exc}") from None
    if data.dtype == bool:
        data = data.astype(np.uint8) * 255
    return data


def load_image(path) -> np.ndarray:
    data = _read(path).astype(np.float64)
    return as_image(data * 2.0 / 255.0 - 1.0, check_range=True)


def to_uint8(image) -> np.ndarray:
    a = np.asarray(image, dtype=np.float64)
    return np.clip(np.floor((a + 1.0) * 127.5 + 0.5), 0, 255).astype(np.uint8)


def save_image(image, path) -> Path:
    path = Path(path)
    a = to_uint8(image)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    PILImage.fromarray(a).save(path, format="PNG")
    return path


def load_mask(path) -> np.ndarray:
    data = _read(path)
    if data.ndim != 2:
        raise ValueError(f"{path}: mask must be a grayscale PNG")
    bad = (data != 0) & (data != 255)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise ValueError(f"{path}: mask pixel ({y}, {x}) = {data[y, x]}, expected 0 or 255")
    try:
        return as_mask(data == 255)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_mask(mask, path) -> Path:
    path = Path(path)
    PILImage.fromarray((np.asarray(mask) * 255).astype(np.uint8)).save(path, format="PNG")
    return path


def load_sequence(directory) -> list[tuple[np.ndarray, np.ndarray]]:
    """Read ``frame_%04d.png`` / ``mask_%04d.png`` pairs indexed from 0."""
    directory = Path(directory)
    if not directory.is_dir():
        raise OSError(f"{directory}: not a directory")
    indices = sorted(int(m.group(1)) for p in directory.iterdir() if (m := FRAME_RE.match(p.name)))
    if not indices:
        raise ValueError(f"{directory}: no frame_%04d.png files")
    for expected, got in enumerate(indices):
        if got != expected:
            raise ValueError(f"{directory}: missing frame_{expected:04d}.png")
    frames = []
    shape = None
    for t in indices:
        mask_path = directory / f"mask_{t:04d}.png"
        if not mask_path.exists():
            raise ValueError(f"{directory}: missing {mask_path.name}")
        img = load_image(directory / f"frame_{t:04d}.png")
        mask = load_mask(mask_path)
        if shape is None:
            shape = img.shape
        if img.shape != shape:
            raise ShapeError(f"frame {t} has shape {img.shape}, frame 0 has {shape}")
        if mask.shape != img.shape[:2]:
            raise ShapeError(f"mask {t} has size {mask.shape}, frame is {img.shape[:2]}")
        frames.append((img, mask))
    return frames


def save_sequence(frames, directory, masks=None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, img in enumerate(frames):
        save_image(img, directory / f"frame_{t:04d}.png")
        if masks is not None:
            save_mask(masks[t], directory / f"mask_{t:04d}.png")
    return directory


def load_frames(directory) -> list[np.ndarray]:
    """Frames only (no masks), for metric computations on outputs."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if FRAME_RE.match(p.name))
    if not paths:
        raise ValueError(f"{directory}: no frame_%04d.png files")
    return [load_image(p) for p in paths]
