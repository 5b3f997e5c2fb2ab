"""Command-line interface: data generation, toy training, RTM, inference, bench."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint, gridio, pipeline
from .errors import (ConfigError, DegenerateQueryError, FormatError,
                     NumericError, StageError)
from .models import (GaussianOracleDenoiser, GaussianOracleStats,
                     GlobalRestorer, PatchDiT, make_dit_gaussian_objective,
                     make_grm_objective, train_toy)
from .pipeline import PipelineConfig, SyntheticScene, make_scene
from .rtm import (TextureExtractor, build_memory, extract_query, load_memory,
                  retrieve_topk, save_memory)
from .tiling import decompose


def _add_shared(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--tau", help="simple,medium,hard intermediate steps")
    p.add_argument("--steps", help="simple,medium,hard sampling step counts")
    p.add_argument("--patch-size", type=int, dest="patch")
    p.add_argument("--overlap", type=int)
    p.add_argument("--topk", type=int)


def _build_config(args) -> PipelineConfig:
    overrides = {}
    if args.config:
        overrides.update(pipeline.parse_config_file(args.config))
    for key in ("seed", "gamma1", "gamma2", "patch", "overlap", "topk"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "tau", None):
        overrides["taus"] = tuple(int(s) for s in args.tau.split(","))
    if getattr(args, "steps", None):
        overrides["steps"] = tuple(int(s) for s in args.steps.split(","))
    try:
        return PipelineConfig(**overrides)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(s) for s in text.lower().split("x"))
        return h, w
    except ValueError as e:
        raise ConfigError(f"bad size '{text}', expected HxW") from e


def _load_grm(cfg: PipelineConfig, path, channels=1, hidden=16) -> GlobalRestorer:
    loaded = None
    if path:
        loaded = checkpoint.load_params(path)
        # conv1.w is (hidden, channels, 3, 3); size the model to the checkpoint
        hidden, channels = loaded["conv1.w"].shape[:2]
    grm = GlobalRestorer(channels=channels, hidden=hidden, seed=cfg.seed)
    if loaded is not None:
        checkpoint.restore_into(grm, loaded)
    return grm


def _make_denoiser(cfg: PipelineConfig, args, reference: np.ndarray):
    if args.denoiser == "oracle":
        stats = GaussianOracleStats(mean=float(reference.mean()),
                                    var=max(float(reference.var()), 1e-6))
        return GaussianOracleDenoiser(stats, cfg.schedule())
    dit = PatchDiT(channels=reference.shape[0], patch=cfg.patch, seed=cfg.seed)
    if args.dit:
        checkpoint.restore_into(dit, checkpoint.load_params(args.dit))
    return dit


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args):
    cfg = _build_config(args)
    h, w = _size(args.size)
    scene = make_scene(h, w, seed=cfg.seed, channels=args.channels,
                       patch=cfg.patch, texture_frac=args.texture_frac,
                       factor=cfg.factor)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gridio.save_grid(out / "hr.psg", scene.hr)
    gridio.save_grid(out / "lr.psg", scene.lr)
    gridio.save_grid(out / "mask.psg", scene.texture_mask[None].astype(np.float32))
    gridio.export_pnm(out / "hr.pgm" if args.channels == 1 else out / "hr.ppm",
                      scene.hr)
    print(f"wrote scene {h}x{w} to {out}")
    return 0


def _scene_pair_sampler(cfg: PipelineConfig, channels: int, crop: int = 48):
    def sampler(rng):
        scene = make_scene(crop, crop, seed=int(rng.integers(1 << 31)),
                           channels=channels, patch=cfg.patch if cfg.patch <= crop else crop,
                           factor=cfg.factor)
        lr_up = pipeline.nearest_upsample(scene.lr, cfg.factor)
        return lr_up, scene.hr
    return sampler


def cmd_train_grm(args):
    cfg = _build_config(args)
    grm = GlobalRestorer(channels=args.channels, hidden=args.hidden, seed=cfg.seed)
    objective = make_grm_objective(grm, _scene_pair_sampler(cfg, args.channels))
    trace = train_toy(grm.params, objective, steps=args.train_steps,
                      lr=args.lr, seed=cfg.seed)
    checkpoint.save_params(args.out, grm.params)
    print(f"trained GRM for {len(trace)} steps; "
          f"loss {trace[0]:.4f} -> {trace[-1]:.4f}; saved to {args.out}")
    return 0


def cmd_train_dit(args):
    cfg = _build_config(args)
    dit = PatchDiT(channels=args.channels, patch=args.dit_patch,
                   width=args.width, depth=args.depth, seed=cfg.seed)
    stats = GaussianOracleStats(mean=0.0, var=1.0)
    objective = make_dit_gaussian_objective(dit, cfg.schedule(), stats,
                                            batch=args.batch)
    trace = train_toy(dit.params, objective, steps=args.train_steps,
                      lr=args.lr, seed=cfg.seed)
    checkpoint.save_params(args.out, dit.params)
    print(f"trained Patch-DiT for {len(trace)} steps; "
          f"loss {trace[0]:.4f} -> {trace[-1]:.4f}; saved to {args.out}")
    return 0


def cmd_rtm_build(args):
    cfg = _build_config(args)
    src = Path(args.src)
    grids = [gridio.load_grid(p) for p in sorted(src.glob("*.psg"))]
    if not grids:
        raise ConfigError(f"no .psg grids under {src}")
    extractor = TextureExtractor((grids[0].shape[0], cfg.patch, cfg.patch),
                                 seed=cfg.seed)
    patches = []
    for g in grids:
        ps, _ = decompose(g, cfg.patch, 0)
        for p in ps:
            try:
                extract_query(extractor, p)
            except DegenerateQueryError:
                continue  # featureless patch, nothing to index
            patches.append(p)
    mem = build_memory(patches, extractor, args.size)
    save_memory(mem, args.out)
    print(f"built texture memory: {len(patches)} source patches -> "
          f"{mem.count} entries at {args.out}")
    return 0


def cmd_rtm_query(args):
    cfg = _build_config(args)
    mem = load_memory(args.mem)
    patch = gridio.load_grid(args.patch_file)
    extractor = TextureExtractor(patch.shape, seed=cfg.seed)
    res = retrieve_topk(mem, patch, extractor, cfg.topk)
    for idx, sim in zip(res.indices, res.similarities):
        print(f"{idx} {sim:.6f}")
    return 0


def cmd_sr(args):
    cfg = _build_config(args)
    lr = gridio.load_grid(args.input)
    grm = _load_grm(cfg, args.grm, channels=lr.shape[0])
    denoiser = _make_denoiser(cfg, args, lr)
    memory = extractor = None
    if args.rtm:
        memory = load_memory(args.rtm)
        extractor = TextureExtractor(memory.values.shape[1:], seed=cfg.seed)
    sr, report = pipeline.superresolve(cfg, lr, grm, denoiser, memory, extractor)
    gridio.save_grid(args.output, sr)
    sys.stdout.write(report.to_text())
    return 0


def cmd_bench(args):
    cfg = _build_config(args)
    h, w = _size(args.size)
    scene = make_scene(h, w, seed=cfg.seed, channels=args.channels,
                       patch=cfg.patch, texture_frac=args.texture_frac,
                       factor=cfg.factor)
    grm = _load_grm(cfg, args.grm, channels=args.channels)
    denoiser = _make_denoiser(cfg, args, scene.hr)
    result = pipeline.benchmark(cfg, scene, grm, denoiser, repeats=args.repeats)
    sys.stdout.write(pipeline.format_benchmark(result))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchscaler")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a labeled synthetic scene")
    _add_shared(p)
    p.add_argument("--out", required=True)
    p.add_argument("--size", default="64x64")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--texture-frac", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-grm", help="train the toy coarse restorer")
    _add_shared(p)
    p.add_argument("--out", required=True)
    p.add_argument("--train-steps", type=int, default=1500)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--hidden", type=int, default=16)
    p.set_defaults(func=cmd_train_grm)

    p = sub.add_parser("train-dit", help="train the toy patch denoiser on Gaussian data")
    _add_shared(p)
    p.add_argument("--out", required=True)
    p.add_argument("--train-steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--dit-patch", type=int, default=4)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--batch", type=int, default=8)
    p.set_defaults(func=cmd_train_dit)

    p = sub.add_parser("rtm", help="texture memory operations")
    rtm_sub = p.add_subparsers(dest="rtm_command", required=True)
    q = rtm_sub.add_parser("build")
    _add_shared(q)
    q.add_argument("--src", required=True, help="directory of .psg grids")
    q.add_argument("--out", required=True)
    q.add_argument("--size", type=int, default=200)
    q.set_defaults(func=cmd_rtm_build)
    q = rtm_sub.add_parser("query")
    _add_shared(q)
    q.add_argument("--mem", required=True)
    q.add_argument("--patch", dest="patch_file", required=True)
    q.set_defaults(func=cmd_rtm_query)

    p = sub.add_parser("sr", help="super-resolve a PSG1 grid")
    _add_shared(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--grm", help="GRM checkpoint")
    p.add_argument("--denoiser", choices=("oracle", "dit"), default="oracle")
    p.add_argument("--dit", help="Patch-DiT checkpoint")
    p.add_argument("--rtm", help="texture memory file")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("bench", help="adaptive vs unified sampling benchmark")
    _add_shared(p)
    p.add_argument("--size", default="96x96")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--texture-frac", type=float, default=0.5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--grm", help="GRM checkpoint")
    p.add_argument("--denoiser", choices=("oracle", "dit"), default="oracle")
    p.add_argument("--dit", help="Patch-DiT checkpoint")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e.cause, ConfigError):
            return 2
        if isinstance(e.cause, NumericError):
            return 4
        return 3
    except (FormatError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
