"""Command line interface.

Every subcommand accepts ``--config FILE.json``; its keys are the long flag
names with dashes replaced by underscores (``max_iters``, ``pool`` ...).
Unknown keys are rejected. Flags given on the command line override the
file. ``bench`` instead takes a benchmark config (see ``BenchConfig``).

Run reports are JSON and record every effective option, so a report is
enough to rerun the command.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchConfig, run_benchmark
from .generators import BlobGenerator, BlobGeneratorSpec, load_mlp, random_discriminator
from .io import load_frames, load_image, load_mask, load_sequence, save_image, save_sequence
from .losses import LossWeights
from .metrics import flicker, ms_ssim, psnr, temporal_consistency_eta
from .optim import SCHEDULES, OptimConfig
from .pipeline import INITS, MODES, InpaintConfig, inpaint_image, inpaint_sequence
from .pool import build_pool, load_pool
from .trainer import GanState, TrainConfig, discriminator_accuracy, train

log = logging.getLogger("latpaint")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument groups shared by several subcommands


def _add_blob(p):
    g = p.add_argument_group("built-in blob generator (used when --generator blob)")
    g.add_argument("--blobs", type=int, default=1, help="number of blobs K")
    g.add_argument("--height", type=int, default=None, help="defaults to the input image")
    g.add_argument("--width", type=int, default=None)
    g.add_argument("--channels", type=int, default=None)
    g.add_argument("--sigma-min", type=float, default=3.0)
    g.add_argument("--sigma-max", type=float, default=10.0)
    g.add_argument("--amp-max", type=float, default=1.5)


def _add_models(p, discriminator=True):
    p.add_argument("--generator", default="blob", help="'blob' or a .lgw weight file")
    if discriminator:
        p.add_argument("--discriminator", default="random",
                       help="'random' (fixed random-weight MLP) or a .lgw weight file")
        p.add_argument("--discriminator-seed", type=int, default=1)
    _add_blob(p)


def _add_inpaint(p):
    _add_models(p)
    p.add_argument("--pool", default=None, help=".lpool file (required for --init pool)")
    p.add_argument("--init", choices=INITS, default="random")
    p.add_argument("--lam", type=float, default=0.01, help="perceptual weight")
    p.add_argument("--gamma", type=float, default=0.01, help="structure weight for pool search")
    p.add_argument("--mu", type=float, default=0.1, help="group consistency weight")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--schedule", choices=SCHEDULES, default="constant")
    p.add_argument("--no-clamp", action="store_true", help="do not clip latents to [-1, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="write the JSON run report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latpaint", description="GAN latent-search inpainting toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", default=None, help="JSON file with option values")
        p.set_defaults(func=func)
        return p

    p = add("train-toy-gan", cmd_train, "train the small MLP GAN on blob images")
    t = TrainConfig()
    p.add_argument("--out", required=True, help="output prefix; writes PREFIX_G.lgw and PREFIX_D.lgw")
    p.add_argument("--steps", type=int, default=t.steps)
    p.add_argument("--batch-size", type=int, default=t.batch_size)
    p.add_argument("--lr-g", type=float, default=t.lr_g)
    p.add_argument("--lr-d", type=float, default=t.lr_d)
    p.add_argument("--latent-dim", type=int, default=t.latent_dim)
    p.add_argument("--hidden", type=int, default=t.hidden)
    p.add_argument("--data-blobs", type=int, default=t.dataset.n_blobs)
    p.add_argument("--data-size", type=int, default=t.dataset.height, help="square image side")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)

    p = add("build-pool", cmd_build_pool, "pre-generate a latent/image pool")
    _add_models(p, discriminator=False)
    p.add_argument("--size", type=int, default=300, help="pool size N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help=".lpool output path")

    p = add("inpaint", cmd_inpaint, "inpaint a single PNG image")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True, help="PNG, 255 = known pixel, 0 = hole")
    p.add_argument("--out", required=True, help="output PNG")
    p.add_argument("--trajectory", default=None, help="write objective per iteration as CSV")
    _add_inpaint(p)

    p = add("inpaint-seq", cmd_inpaint_seq, "inpaint a directory of frame_%%04d.png / mask_%%04d.png")
    p.add_argument("--frames", required=True, help="input directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=MODES, default="reuse+group")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--nonpivot-iters", type=int, default=None)
    p.add_argument("--refine-iters", type=int, default=None)
    p.add_argument("--pivot-init", choices=("reuse", "pool"), default="reuse")
    _add_inpaint(p)

    p = add("bench", cmd_bench, "run the seeded benchmark corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--families", nargs="+", choices=("image", "video", "pseudo"), default=None)

    p = add("metrics", cmd_metrics, "PSNR / MS-SSIM of images, eta / flicker of frame directories")
    p.add_argument("--reference", default=None, help="reference PNG or frame directory")
    p.add_argument("--output", default=None, help="PNG or frame directory to score")
    p.add_argument("--report", default=None)
    return parser


# ---------------------------------------------------------------------------
# config handling


def _config_dests(sub: argparse.ArgumentParser) -> set[str]:
    return {a.dest for a in sub._actions if a.dest not in ("help", "config") and a.option_strings}


def parse_args(argv=None) -> argparse.Namespace:
    """Parse ``argv``, merging ``--config`` values underneath explicit flags."""
    parser = build_parser()
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    required = {}
    for name, sub in subs.items():
        required[name] = [a for a in sub._actions if a.required]
        for a in required[name]:
            a.required = False  # may come from the config file
    args = parser.parse_args(argv)
    sub = subs[args.command]
    if args.config and args.command != "bench":
        cfg = _read_json(args.config)
        unknown = set(cfg) - _config_dests(sub)
        if unknown:
            raise CliError(f"{args.config}: unknown config keys {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    missing = [a.option_strings[0] for a in required[args.command] if getattr(args, a.dest) is None]
    if missing:
        raise CliError(f"{args.command}: missing required option(s) {', '.join(missing)}")
    return args


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: config must be a JSON object")
    return data


def _options(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if not k.startswith("_") and k != "func"}


def _write_report(path, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# model construction


def _generator(args, shape=None):
    if args.generator == "blob":
        h, w, c = shape if shape is not None else (None, None, None)
        spec = BlobGeneratorSpec(
            n_blobs=args.blobs,
            height=args.height or h or 32,
            width=args.width or w or 32,
            channels=args.channels or c or 1,
            sigma_min=args.sigma_min,
            sigma_max=args.sigma_max,
            amp_max=args.amp_max,
        )
        return BlobGenerator(spec)
    model = load_mlp(args.generator)
    if not hasattr(model, "latent_dim"):
        raise CliError(f"{args.generator} is not a generator")
    return model


def _discriminator(args, shape):
    if args.discriminator == "random":
        return random_discriminator(shape, seed=args.discriminator_seed)
    model = load_mlp(args.discriminator)
    if hasattr(model, "latent_dim"):
        raise CliError(f"{args.discriminator} is not a discriminator")
    if tuple(model.shape) != tuple(shape):
        raise CliError(f"discriminator expects {model.shape}, images are {shape}")
    return model


def _inpaint_config(args, G) -> InpaintConfig:
    pool = load_pool(args.pool, G) if args.pool else None
    return InpaintConfig(
        weights=LossWeights(lam=args.lam, gamma=args.gamma, mu=args.mu),
        optim=OptimConfig(max_iters=args.max_iters, lr=args.lr, clamp_z=not args.no_clamp,
                          seed=args.seed, schedule=args.schedule),
        init=args.init,
        pool=pool,
        window=getattr(args, "window", 5),
        nonpivot_iters=getattr(args, "nonpivot_iters", None),
        refine_iters=getattr(args, "refine_iters", None),
        pivot_init=getattr(args, "pivot_init", "reuse"),
    )


def _result_record(res) -> dict:
    return {
        "iterations": res.trajectory.iterations,
        "iterations_to_saturation": res.iterations_to_saturation,
        "initial_objective": res.trajectory.values[0],
        "final_objective": res.trajectory.values[-1],
        "init": res.init,
        "z": res.z.tolist(),
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> None:
    config = TrainConfig(
        batch_size=args.batch_size, steps=args.steps, lr_g=args.lr_g, lr_d=args.lr_d,
        latent_dim=args.latent_dim, hidden=args.hidden, seed=args.seed,
        dataset=BlobGeneratorSpec(n_blobs=args.data_blobs, height=args.data_size, width=args.data_size,
                                  sigma_min=1.5, sigma_max=4.0),
    )
    result = train(config, out_prefix=args.out)
    state = GanState(result.generator.mlp, result.discriminator.mlp, [], [])
    report = {
        "command": "train-toy-gan",
        "options": _options(args),
        "train_config": asdict(config),
        "final_d_loss": result.d_losses[-1] if result.d_losses else None,
        "final_g_loss": result.g_losses[-1] if result.g_losses else None,
        "discriminator_accuracy": discriminator_accuracy(state, config),
        "files": [f"{args.out}_G.lgw", f"{args.out}_D.lgw"],
    }
    _write_report(args.report, report)


def cmd_build_pool(args) -> None:
    G = _generator(args)
    pool = build_pool(G, args.size, seed=args.seed)
    path = pool.save(args.out)
    print(f"wrote {path} (N={len(pool)}, d={G.latent_dim}, shape={tuple(G.shape)})")


def cmd_inpaint(args) -> None:
    image = load_image(args.image)
    mask = load_mask(args.mask)
    G = _generator(args, image.shape)
    D = _discriminator(args, image.shape)
    config = _inpaint_config(args, G)
    res = inpaint_image(image, mask, G, D, config)
    save_image(res.image, args.out)
    if args.trajectory:
        res.trajectory.to_csv(args.trajectory)
    report = {"command": "inpaint", "options": _options(args), "result": _result_record(res)}
    _write_report(args.report, report)


def cmd_inpaint_seq(args) -> None:
    frames = load_sequence(args.frames)
    shape = frames[0][0].shape
    G = _generator(args, shape)
    D = _discriminator(args, shape)
    config = _inpaint_config(args, G)
    results = inpaint_sequence(frames, G, D, config, args.mode)
    outs = [r.image for r in results]
    save_sequence(outs, args.out)
    report = {
        "command": "inpaint-seq",
        "options": _options(args),
        "frames": [dict(_result_record(r), frame=t) for t, r in enumerate(results)],
        "flicker": flicker(outs),
        "eta": temporal_consistency_eta(outs) if len(outs) > 1 else None,
    }
    _write_report(args.report, report)


def cmd_bench(args) -> None:
    cfg = BenchConfig.from_dict(_read_json(args.config)) if args.config else BenchConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.families is not None:
        overrides["families"] = tuple(args.families)
    if overrides:
        cfg = BenchConfig.from_dict({**cfg.to_dict(), **overrides})
    summary = run_benchmark(cfg, args.out_dir)
    for fam in cfg.families:
        if fam in summary:
            print(f"{fam}: {json.dumps(summary[fam], sort_keys=True)}")
    if summary["failures"]:
        raise CliError(f"{len(summary['failures'])} benchmark case(s) failed; see summary.json")


def cmd_metrics(args) -> None:
    report = {"command": "metrics", "options": _options(args)}
    if args.output is None:
        raise CliError("--output is required")
    out = Path(args.output)
    if out.is_dir():
        frames = load_frames(out)
        report["n_frames"] = len(frames)
        report["flicker"] = flicker(frames)
        report["eta"] = temporal_consistency_eta(frames) if len(frames) > 1 else None
        if args.reference:
            refs = load_frames(args.reference)
            if len(refs) != len(frames):
                raise CliError(f"{len(refs)} reference frames vs {len(frames)} output frames")
            report["psnr"] = [psnr(a, b) for a, b in zip(frames, refs)]
            report["ms_ssim"] = [ms_ssim(a, b) for a, b in zip(frames, refs)]
            report["mean_psnr"] = float(np.mean(report["psnr"]))
    else:
        if args.reference is None:
            raise CliError("--reference is required for a single image")
        a, b = load_image(out), load_image(args.reference)
        report["psnr"] = psnr(a, b)
        report["ms_ssim"] = ms_ssim(a, b)
    _write_report(args.report, report)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"latpaint: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
