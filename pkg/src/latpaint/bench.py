"""Seeded benchmark corpus: convergence speedups and temporal consistency.

Three families of cases are generated from a blob generator:

* single images ``G(z*)`` under a random block mask, inpainted from a random
  latent and from the pool's nearest neighbour;
* slowly drifting sequences (``z`` moves by at most ``drift`` per component
  and frame), inpainted per frame and with warm starts;
* pseudo-sequences (one image, ``S`` different masks) scored with eta.

Every case derives its own seed from ``(config.seed, family, index)`` so the
report does not depend on execution order or on the number of workers.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .generators import BlobGenerator, BlobGeneratorSpec, random_discriminator, sample_latent
from .losses import LossWeights
from .metrics import MaskSpec, flicker, make_pseudo_sequence, psnr, temporal_consistency_eta
from .optim import OptimConfig
from .pipeline import MODES, InpaintConfig, inpaint_image, inpaint_sequence
from .pool import Pool, build_pool
from .tensor import as_mask

log = logging.getLogger(__name__)

BENCH_BLOB = BlobGeneratorSpec(n_blobs=1, sigma_min=3.0, sigma_max=10.0, amp_max=1.5)


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 0
    n_images: int = 50
    n_sequences: int = 10
    sequence_length: int = 10
    drift: float = 0.02
    n_pseudo: int = 20
    pseudo_length: int = 5
    pool_size: int = 300
    planted: bool = False
    window: int = 5
    coverage: float = 0.25
    blob: BlobGeneratorSpec = BENCH_BLOB
    weights: LossWeights = LossWeights()
    optim: OptimConfig = OptimConfig()
    discriminator_seed: int = 1
    families: tuple[str, ...] = ("image", "video", "pseudo")
    workers: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["families"] = list(self.families)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        nested = {"blob": BlobGeneratorSpec, "weights": LossWeights, "optim": OptimConfig}
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, typ in nested.items():
            if key in d:
                sub = d[key]
                bad = set(sub) - set(typ.__dataclass_fields__)
                if bad:
                    raise ValueError(f"unknown keys in {key}: {sorted(bad)}")
                d[key] = typ(**sub)
        if "families" in d:
            d["families"] = tuple(d["families"])
        return cls(**d)


@dataclass
class _Setup:
    G: BlobGenerator
    D: object
    pool: Pool
    config: BenchConfig = field(repr=False)


def _setup(config: BenchConfig) -> _Setup:
    G = BlobGenerator(config.blob)
    D = random_discriminator(G.shape, seed=config.discriminator_seed)
    pool = build_pool(G, config.pool_size, seed=[config.seed, 99])
    return _Setup(G, D, pool, config)


def _rng(config, family: int, index: int):
    return np.random.default_rng([config.seed, family, index])


def _inpaint_config(config: BenchConfig, init: str, pool: Pool, seed: int) -> InpaintConfig:
    return InpaintConfig(weights=config.weights, optim=replace(config.optim, seed=seed), init=init,
                         pool=pool, window=config.window)


def image_case(setup: _Setup, i: int) -> dict:
    c = setup.config
    rng = _rng(c, 1, i)
    z_true = sample_latent(rng, setup.G.latent_dim)
    image = setup.G.forward(z_true)
    mask = as_mask(MaskSpec(c.coverage).sample(*image.shape[:2], rng))
    pool = setup.pool
    if c.planted:
        z32 = z_true.astype(np.float32).astype(np.float64)
        img32 = setup.G.forward(z32).astype(np.float32).astype(np.float64)
        pool = Pool(np.vstack([pool.latents, z32]), np.concatenate([pool.images, img32[None]]), pool.fingerprint)
    seed = int(rng.integers(2**31))
    rand = inpaint_image(image, mask, setup.G, setup.D, _inpaint_config(c, "random", pool, seed))
    nn = inpaint_image(image, mask, setup.G, setup.D, _inpaint_config(c, "pool", pool, seed))
    it_r, it_p = rand.iterations_to_saturation, nn.iterations_to_saturation
    return {
        "case": i,
        "iters_random": it_r,
        "iters_pool": it_p,
        "speedup": it_r / max(it_p, 1),
        "final_random": rand.trajectory.values[-1],
        "final_pool": nn.trajectory.values[-1],
        "psnr_random": psnr(rand.image, image),
        "psnr_pool": psnr(nn.image, image),
        "pool_index": nn.init["pool_index"],
    }


def drifting_sequence(G, length: int, drift: float, coverage: float, rng):
    """Frames ``G(z_t)`` with ``z_{t+1} = clip(z_t + U[-drift, drift]^d)``."""
    z = sample_latent(rng, G.latent_dim) * 0.8
    frames = []
    spec = MaskSpec(coverage)
    for _ in range(length):
        img = G.forward(z)
        frames.append((img, as_mask(spec.sample(*img.shape[:2], rng))))
        z = np.clip(z + rng.uniform(-drift, drift, z.shape), -1.0, 1.0)
    return frames


def video_case(setup: _Setup, i: int) -> list[dict]:
    c = setup.config
    rng = _rng(c, 2, i)
    frames = drifting_sequence(setup.G, c.sequence_length, c.drift, c.coverage, rng)
    seed = int(rng.integers(2**31))
    rows = []
    for mode in MODES:
        init = "random" if mode == "independent" else "pool"
        res = inpaint_sequence(frames, setup.G, setup.D, _inpaint_config(c, init, setup.pool, seed), mode)
        for t, r in enumerate(res):
            rows.append({
                "case": i,
                "mode": mode,
                "frame": t,
                "role": r.init.get("role", "independent"),
                "iterations": r.iterations_to_saturation,
                "budget": r.trajectory.iterations,
                "psnr": psnr(r.image, frames[t][0]),
            })
    return rows


def pseudo_case(setup: _Setup, i: int) -> list[dict]:
    c = setup.config
    rng = _rng(c, 3, i)
    base = setup.G.forward(sample_latent(rng, setup.G.latent_dim))
    seq = make_pseudo_sequence(base, c.pseudo_length, MaskSpec(c.coverage), seed=int(rng.integers(2**31)))
    seed = int(rng.integers(2**31))
    rows = []
    for mode in MODES:
        init = "random" if mode == "independent" else "pool"
        res = inpaint_sequence(seq.frames(), setup.G, setup.D, _inpaint_config(c, init, setup.pool, seed), mode)
        outs = [r.image for r in res]
        zs = np.stack([r.z for r in res])
        rows.append({
            "case": i,
            "mode": mode,
            "eta": temporal_consistency_eta(outs),
            "flicker": flicker(outs),
            "mean_psnr": float(np.mean([psnr(o, base) for o in outs])),
            "mean_z_dist": float(np.mean([np.abs(zs[j] - zs[k]).sum()
                                          for j in range(len(zs)) for k in range(j + 1, len(zs))])),
        })
    return rows


_FAMILIES = {"image": image_case, "video": video_case, "pseudo": pseudo_case}
_WORKER_SETUP: _Setup | None = None


def _worker_init(config):
    global _WORKER_SETUP
    _WORKER_SETUP = _setup(config)


def _run_case(task):
    family, i = task
    try:
        out = _FAMILIES[family](_WORKER_SETUP, i)
        return family, i, out if isinstance(out, list) else [out], None
    except Exception as exc:  # one broken case must not sink the batch
        return family, i, [], f"{type(exc).__name__}: {exc}"


def _quartiles(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"n": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"n": int(v.size), "median": float(med), "q1": float(q1), "q3": float(q3),
            "mean": float(v.mean())}


def summarize(rows: dict[str, list[dict]], config: BenchConfig, failures: list[dict]) -> dict:
    out = {"config": config.to_dict(), "failures": failures}
    img = rows.get("image", [])
    if img:
        out["image"] = {
            "speedup": _quartiles([r["speedup"] for r in img]),
            "iters_random": _quartiles([r["iters_random"] for r in img]),
            "iters_pool": _quartiles([r["iters_pool"] for r in img]),
            "psnr_random": _quartiles([r["psnr_random"] for r in img]),
            "psnr_pool": _quartiles([r["psnr_pool"] for r in img]),
        }
    vid = rows.get("video", [])
    if vid:
        indep = [r["iterations"] for r in vid if r["mode"] == "independent"]
        block = {"independent_iters": _quartiles(indep)}
        for mode in ("reuse", "reuse+group"):
            block[f"{mode}_nonpivot_iters"] = _quartiles(
                [r["iterations"] for r in vid if r["mode"] == mode and r["role"] == "warm"])
            block[f"{mode}_psnr"] = _quartiles([r["psnr"] for r in vid if r["mode"] == mode])
        block["independent_psnr"] = _quartiles([r["psnr"] for r in vid if r["mode"] == "independent"])
        med_warm = block["reuse_nonpivot_iters"].get("median")
        if med_warm is not None:
            block["nonpivot_fraction"] = med_warm / max(block["independent_iters"]["median"], 1.0)
        out["video"] = block
    ps = rows.get("pseudo", [])
    if ps:
        by_mode = {m: [r for r in sorted(ps, key=lambda r: r["case"]) if r["mode"] == m] for m in MODES}
        block = {f"eta_{m}": _quartiles([r["eta"] for r in rs]) for m, rs in by_mode.items()}
        block.update({f"flicker_{m}": _quartiles([r["flicker"] for r in rs]) for m, rs in by_mode.items()})
        block.update({f"z_dist_{m}": _quartiles([r["mean_z_dist"] for r in rs]) for m, rs in by_mode.items()})
        g = np.array([r["eta"] for r in by_mode["reuse+group"]])
        ind = np.array([r["eta"] for r in by_mode["independent"]])
        if len(g) == len(ind) and len(g) >= 2:
            diff = g - ind
            t = stats.ttest_rel(g, ind, alternative="greater")
            block["eta_group_minus_independent"] = {
                "mean": float(diff.mean()),
                "t": float(t.statistic),
                "p_value": float(t.pvalue),
            }
        out["pseudo"] = block
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def run_benchmark(config: BenchConfig, out_dir=None) -> dict:
    """Run every requested family and return the summary.

    With ``out_dir`` set, writes ``<family>.csv`` per-case tables and
    ``summary.json``.
    """
    tasks = []
    counts = {"image": config.n_images, "video": config.n_sequences, "pseudo": config.n_pseudo}
    for fam in config.families:
        if fam not in _FAMILIES:
            raise ValueError(f"unknown benchmark family {fam!r}")
        tasks += [(fam, i) for i in range(counts[fam])]

    if config.workers > 1:
        with ProcessPoolExecutor(config.workers, initializer=_worker_init, initargs=(config,)) as ex:
            results = list(ex.map(_run_case, tasks))
    else:
        _worker_init(config)
        results = [_run_case(t) for t in tasks]

    rows: dict[str, list[dict]] = {f: [] for f in config.families}
    failures = []
    for fam, i, out, err in results:
        if err is not None:
            log.warning("%s case %d failed: %s", fam, i, err)
            failures.append({"family": fam, "case": i, "error": err})
        rows[fam].extend(out)

    summary = summarize(rows, config, failures)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for fam, rs in rows.items():
            _write_csv(out_dir / f"{fam}.csv", rs)
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["rows"] = rows
    return summary
