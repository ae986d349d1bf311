"""Differentiable generators and discriminators.

Two families are provided:

``BlobGenerator``
    an analytic renderer that draws ``K`` Gaussian blobs and squashes the sum
    through ``tanh``. It needs no training and has an exact closed-form
    vector-Jacobian product, which makes it the workhorse for tests and
    benchmarks.

``MlpGenerator`` / ``MlpDiscriminator``
    small fully connected networks (tanh hidden layers, tanh or sigmoid
    output) backed by the ``.lgw`` weight file described in
    :func:`save_mlp`.

Every model exposes ``forward`` and ``vjp``; generators additionally expose
``latent_dim``, ``shape`` and ``forward_batch``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .tensor import ShapeError, as_latent

MAGIC = b"LGW1"
ACTIVATIONS = ("tanh", "sigmoid")


class GeneratorModel(Protocol):
    latent_dim: int
    shape: tuple[int, int, int]

    def forward(self, z: np.ndarray) -> np.ndarray: ...

    def forward_batch(self, zs: np.ndarray) -> np.ndarray: ...

    def vjp(self, z: np.ndarray, cotangent: np.ndarray) -> np.ndarray: ...

    def fingerprint(self) -> str: ...


class DiscriminatorModel(Protocol):
    shape: tuple[int, int, int]

    def forward(self, image: np.ndarray) -> float: ...

    def vjp(self, image: np.ndarray, cotangent: float) -> np.ndarray: ...


def sample_latent(rng, dim: int) -> np.ndarray:
    """Draw ``z ~ U[-1, 1]^dim``. ``rng`` is a seed or a numpy Generator."""
    if dim < 1:
        raise ValueError("latent dim must be >= 1")
    rng = np.random.default_rng(rng)
    return rng.uniform(-1.0, 1.0, size=dim)


# ---------------------------------------------------------------------------
# Blob generator


@dataclass(frozen=True)
class BlobGeneratorSpec:
    """Geometry of the blob renderer.

    Each blob consumes ``3 + channels`` latent entries laid out as
    ``(cx, cy, s, a_1..a_C)``. Entries in [-1, 1] map affinely to the pixel
    centre, to the log-radius range ``[log sigma_min, log sigma_max]`` and to
    the amplitude range ``[-amp_max, amp_max]``. Going through the log radius
    keeps the decoding free of singularities for every finite latent.
    """

    n_blobs: int = 3
    height: int = 32
    width: int = 32
    channels: int = 1
    sigma_min: float = 2.0
    sigma_max: float = 8.0
    amp_max: float = 2.0

    def __post_init__(self):
        if self.n_blobs < 1:
            raise ValueError("n_blobs must be >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.height < 1 or self.width < 1:
            raise ValueError("raster must be non-empty")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.amp_max <= 0:
            raise ValueError("amp_max must be positive")

    @property
    def latent_dim(self) -> int:
        return self.n_blobs * (3 + self.channels)


class BlobGenerator:
    def __init__(self, spec: BlobGeneratorSpec | None = None):
        self.spec = spec or BlobGeneratorSpec()
        s = self.spec
        self.latent_dim = s.latent_dim
        self.shape = (s.height, s.width, s.channels)
        self._ys = np.arange(s.height, dtype=np.float64)[:, None]
        self._xs = np.arange(s.width, dtype=np.float64)[None, :]
        self._log_range = np.log(s.sigma_max) - np.log(s.sigma_min)

    def decode(self, z: np.ndarray):
        """Return per-blob ``(cx, cy, sigma, amplitudes)``."""
        s = self.spec
        p = as_latent(z, self.latent_dim).reshape(s.n_blobs, 3 + s.channels)
        u = (p[:, :3] + 1.0) * 0.5
        cx = u[:, 0] * (s.width - 1)
        cy = u[:, 1] * (s.height - 1)
        sigma = np.exp(np.log(s.sigma_min) + u[:, 2] * self._log_range)
        amp = s.amp_max * p[:, 3:]
        return cx, cy, sigma, amp

    def _bumps(self, cx, cy, sigma):
        dx = self._xs[None] - cx[:, None, None]
        dy = self._ys[None] - cy[:, None, None]
        q = (dx * dx + dy * dy) / (2.0 * sigma[:, None, None] ** 2)
        return dx, dy, q, np.exp(-q)

    def forward(self, z: np.ndarray) -> np.ndarray:
        cx, cy, sigma, amp = self.decode(z)
        _, _, _, e = self._bumps(cx, cy, sigma)
        return np.tanh(np.einsum("khw,kc->hwc", e, amp))

    def forward_batch(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=np.float64)
        return np.stack([self.forward(z) for z in zs]) if len(zs) else np.zeros((0, *self.shape))

    def vjp(self, z: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        s = self.spec
        cot = np.asarray(cotangent, dtype=np.float64)
        if cot.shape != self.shape:
            raise ShapeError(f"cotangent shape {cot.shape} != {self.shape}")
        cx, cy, sigma, amp = self.decode(z)
        dx, dy, q, e = self._bumps(cx, cy, sigma)
        out = np.tanh(np.einsum("khw,kc->hwc", e, amp))
        g_pre = cot * (1.0 - out * out)

        g_amp = np.einsum("hwc,khw->kc", g_pre, e)
        # weight of each pixel for the shared geometric parameters of blob k
        w = np.einsum("hwc,kc->khw", g_pre, amp) * e
        inv_s2 = 1.0 / sigma**2
        g_cx = (w * dx).sum(axis=(1, 2)) * inv_s2
        g_cy = (w * dy).sum(axis=(1, 2)) * inv_s2
        # dE/dlog(sigma) = E * 2q; guarded so 0 * inf never appears
        two_q_e = np.where(e > 0.0, 2.0 * q * e, 0.0)
        g_logs = (np.einsum("hwc,kc->khw", g_pre, amp) * two_q_e).sum(axis=(1, 2))

        grad = np.empty((s.n_blobs, 3 + s.channels))
        grad[:, 0] = g_cx * (s.width - 1) * 0.5
        grad[:, 1] = g_cy * (s.height - 1) * 0.5
        grad[:, 2] = g_logs * self._log_range * 0.5
        grad[:, 3:] = g_amp * s.amp_max
        return grad.reshape(-1)

    def fingerprint(self) -> str:
        blob = json.dumps({"kind": "blob", **asdict(self.spec)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Multilayer perceptron


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    return 0.5 * (1.0 + np.tanh(0.5 * x))  # overflow-free logistic


def _act_grad(name: str, y: np.ndarray) -> np.ndarray:
    """Derivative expressed through the activation output ``y``."""
    if name == "tanh":
        return 1.0 - y * y
    return y * (1.0 - y)


@dataclass
class Layer:
    weight: np.ndarray  # (rows=out, cols=in)
    bias: np.ndarray  # (rows,)
    activation: str


class Mlp:
    """Affine + activation chain.

    Parameters are rounded to float32 precision on construction so that a
    model written to an ``.lgw`` file and read back computes bit-identical
    outputs.
    """

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ValueError("an MLP needs at least one layer")
        self.layers: list[Layer] = []
        prev = None
        for i, layer in enumerate(layers):
            w = np.asarray(layer.weight, dtype=np.float32).astype(np.float64)
            b = np.asarray(layer.bias, dtype=np.float32).astype(np.float64)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} inconsistent")
            if prev is not None and w.shape[1] != prev:
                raise ShapeError(f"layer {i}: expects {w.shape[1]} inputs, previous layer gives {prev}")
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            self.layers.append(Layer(w, b, layer.activation))
            prev = w.shape[0]

    @classmethod
    def init(cls, sizes: Sequence[int], activations: Sequence[str], rng) -> "Mlp":
        """Seeded Glorot-uniform initialisation with zero biases."""
        rng = np.random.default_rng(rng)
        layers = []
        for (n_in, n_out), act in zip(zip(sizes[:-1], sizes[1:]), activations, strict=True):
            lim = np.sqrt(6.0 / (n_in + n_out))
            layers.append(Layer(rng.uniform(-lim, lim, (n_out, n_in)), np.zeros(n_out), act))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.layers[-1].weight.shape[0]

    def forward(self, x: np.ndarray, *, keep: bool = False):
        """Evaluate on a vector or a batch of row vectors.

        With ``keep=True`` returns ``(output, activations)`` where
        ``activations[i]`` is the input of layer ``i`` (and the last entry is
        the output), for use by :meth:`backward`.
        """
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != self.n_in:
            raise ShapeError(f"input has {h.shape[-1]} features, model expects {self.n_in}")
        acts = [h]
        for layer in self.layers:
            h = _act(layer.activation, h @ layer.weight.T + layer.bias)
            acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts: list[np.ndarray], cotangent: np.ndarray, *, params: bool = False):
        """Reverse pass. Returns the input cotangent, and parameter gradients
        ``[(dW, db), ...]`` summed over the batch when ``params`` is set."""
        g = np.asarray(cotangent, dtype=np.float64)
        if g.shape != acts[-1].shape:
            raise ShapeError(f"cotangent shape {g.shape} != output shape {acts[-1].shape}")
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            g = g * _act_grad(layer.activation, acts[i + 1])
            if params:
                x = acts[i]
                if x.ndim == 1:
                    grads.append((np.outer(g, x), g.copy()))
                else:
                    grads.append((g.T @ x, g.sum(axis=0)))
            g = g @ layer.weight
        grads.reverse()
        return (g, grads) if params else g

    def vjp(self, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        _, acts = self.forward(x, keep=True)
        return self.backward(acts, cotangent)

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<I", len(self.layers))]
        for layer in self.layers:
            rows, cols = layer.weight.shape
            parts.append(struct.pack("<III", rows, cols, ACTIVATIONS.index(layer.activation)))
            parts.append(layer.weight.astype("<f4").tobytes())
            parts.append(layer.bias.astype("<f4").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Mlp":
        if buf[:4] != MAGIC:
            raise ValueError("not an LGW1 weight file")
        (n,) = struct.unpack_from("<I", buf, 4)
        off = 8
        layers = []
        try:
            for _ in range(n):
                rows, cols, tag = struct.unpack_from("<III", buf, off)
                off += 12
                w = np.frombuffer(buf, "<f4", rows * cols, off).reshape(rows, cols)
                off += 4 * rows * cols
                b = np.frombuffer(buf, "<f4", rows, off)
                off += 4 * rows
                layers.append(Layer(w, b, ACTIVATIONS[tag]))
        except (struct.error, ValueError, IndexError) as exc:
            raise ValueError(f"truncated or corrupt weight file: {exc}") from None
        if off != len(buf):
            raise ValueError(f"{len(buf) - off} trailing bytes in weight file")
        return cls(layers)


class MlpGenerator:
    def __init__(self, mlp: Mlp, shape: tuple[int, int, int]):
        shape = tuple(int(s) for s in shape)
        if mlp.n_out != int(np.prod(shape)):
            raise ShapeError(f"network emits {mlp.n_out} values, image shape {shape} needs {np.prod(shape)}")
        if mlp.layers[-1].activation != "tanh":
            raise ValueError("generator output layer must be tanh")
        self.mlp = mlp
        self.shape = shape
        self.latent_dim = mlp.n_in

    def forward(self, z: np.ndarray) -> np.ndarray:
        return self.mlp.forward(as_latent(z, self.latent_dim)).reshape(self.shape)

    def forward_batch(self, zs: np.ndarray) -> np.ndarray:
        zs = np.asarray(zs, dtype=np.float64).reshape(-1, self.latent_dim)
        return self.mlp.forward(zs).reshape(-1, *self.shape)

    def vjp(self, z: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        cot = np.asarray(cotangent, dtype=np.float64)
        if cot.shape != self.shape:
            raise ShapeError(f"cotangent shape {cot.shape} != {self.shape}")
        return self.mlp.vjp(as_latent(z, self.latent_dim), cot.reshape(-1))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.mlp.to_bytes()).hexdigest()


class MlpDiscriminator:
    def __init__(self, mlp: Mlp, shape: tuple[int, int, int]):
        shape = tuple(int(s) for s in shape)
        if mlp.n_in != int(np.prod(shape)) or mlp.n_out != 1:
            raise ShapeError(f"discriminator must map {np.prod(shape)} inputs to 1 output")
        if mlp.layers[-1].activation != "sigmoid":
            raise ValueError("discriminator output layer must be sigmoid")
        self.mlp = mlp
        self.shape = shape

    def forward(self, image: np.ndarray) -> float:
        return float(self.mlp.forward(np.asarray(image).reshape(-1))[0])

    def forward_batch(self, images: np.ndarray) -> np.ndarray:
        return self.mlp.forward(np.asarray(images).reshape(len(images), -1))[:, 0]

    def vjp(self, image: np.ndarray, cotangent: float) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self.shape:
            raise ShapeError(f"image shape {image.shape} != {self.shape}")
        g = self.mlp.vjp(image.reshape(-1), np.array([float(cotangent)]))
        return g.reshape(self.shape)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.mlp.to_bytes()).hexdigest()


def random_discriminator(shape: tuple[int, int, int], hidden: int = 32, seed: int = 0,
                         scale: float = 1.0) -> MlpDiscriminator:
    """An untrained discriminator with seeded weights.

    Good enough to supply a well-defined perceptual term for the blob
    benchmarks, where realism scoring is not the object of study.
    """
    n = int(np.prod(shape))
    mlp = Mlp.init([n, hidden, 1], ["tanh", "sigmoid"], seed)
    if scale != 1.0:
        mlp = Mlp([Layer(l.weight * scale, l.bias, l.activation) for l in mlp.layers])
    return MlpDiscriminator(mlp, shape)


# ---------------------------------------------------------------------------
# Weight files


def save_mlp(model: MlpGenerator | MlpDiscriminator, path) -> Path:
    """Write ``<path>.lgw`` and the ``<path>.json`` manifest next to it.

    Binary layout, all little-endian::

        b"LGW1"  u32 n_layers
        repeat n_layers:
            u32 rows  u32 cols  u32 activation (0 = tanh, 1 = sigmoid)
            f32[rows * cols] weights, row-major
            f32[rows] bias

    The manifest records kind, image shape, layer shapes/activations and the
    SHA-256 of the binary.
    """
    path = Path(path).with_suffix(".lgw")
    blob = model.mlp.to_bytes()
    path.write_bytes(blob)
    kind = "generator" if isinstance(model, MlpGenerator) else "discriminator"
    manifest = {
        "format": "LGW1",
        "kind": kind,
        "shape": list(model.shape),
        "layers": [
            {"rows": l.weight.shape[0], "cols": l.weight.shape[1], "activation": l.activation}
            for l in model.mlp.layers
        ],
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_mlp(path) -> MlpGenerator | MlpDiscriminator:
    path = Path(path).with_suffix(".lgw")
    try:
        blob = path.read_bytes()
        manifest = json.loads(path.with_suffix(".json").read_text())
    except OSError as exc:
        raise OSError(f"cannot read model {path}: {exc}") from exc
    if manifest.get("format") != "LGW1":
        raise ValueError(f"{path}: manifest format is not LGW1")
    if manifest.get("sha256") not in (None, hashlib.sha256(blob).hexdigest()):
        raise ValueError(f"{path}: checksum does not match manifest")
    mlp = Mlp.from_bytes(blob)
    declared = [(l["rows"], l["cols"], l["activation"]) for l in manifest["layers"]]
    actual = [(*l.weight.shape, l.activation) for l in mlp.layers]
    if declared != actual:
        raise ValueError(f"{path}: manifest layers {declared} disagree with binary {actual}")
    shape = tuple(manifest["shape"])
    if manifest["kind"] == "generator":
        return MlpGenerator(mlp, shape)
    if manifest["kind"] == "discriminator":
        return MlpDiscriminator(mlp, shape)
    raise ValueError(f"{path}: unknown model kind {manifest['kind']!r}")
