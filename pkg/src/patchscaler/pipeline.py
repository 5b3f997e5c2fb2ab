"""End-to-end orchestration: synthetic data, encode/decode, inference, benchmark."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .colornorm import wavelet_color_normalize
from .confidence import GroupLabel, Thresholds, build_qmap
from .errors import (ConfigError, DegenerateQueryError, GridShapeError,
                     StageError)
from .pgs import GroupConfig, PgsReport, run_pgs
from .rtm import retrieve_topk
from .schedule import NoiseSchedule, build_linear_schedule
from .tiling import decompose, recompose

_LABELS = (GroupLabel.SIMPLE, GroupLabel.MEDIUM, GroupLabel.HARD)


@dataclass(frozen=True)
class PipelineConfig:
    d: int = 1                    # latent downsample factor; 1 = identity encoder
    patch: int = 16
    overlap: int = 4
    gamma1: float = 0.95
    gamma2: float = 0.75
    taus: tuple[int, int, int] = (400, 700, 1000)
    steps: tuple[int, int, int] = (8, 14, 20)
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    topk: int = 4
    levels: int = 2
    colornorm: bool = True
    factor: int = 2               # LR -> HR upsampling factor
    seed: int = 0

    def __post_init__(self):
        if self.d not in (1, 2, 4):
            raise ConfigError(f"downsample factor must be 1, 2 or 4, got {self.d}")
        if self.factor < 1:
            raise ConfigError("factor must be >= 1")

    def thresholds(self) -> Thresholds:
        return Thresholds(self.gamma1, self.gamma2)

    def group_config(self) -> GroupConfig:
        return GroupConfig(taus=dict(zip(_LABELS, self.taus)),
                           steps=dict(zip(_LABELS, self.steps)))

    def schedule(self) -> NoiseSchedule:
        return build_linear_schedule(self.T, self.beta_start, self.beta_end)


def parse_config_file(path) -> dict:
    """key value (or key=value) lines mirroring PipelineConfig field names."""
    fields = {f.name: f.type for f in PipelineConfig.__dataclass_fields__.values()}
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, val = (s.strip() for s in line.split("=", 1))
            else:
                key, _, val = line.partition(" ")
                val = val.strip()
            if key not in fields:
                raise ConfigError(f"unknown config key '{key}'")
            out[key] = _coerce(key, val)
    return out


def _coerce(key: str, val: str):
    if key in ("taus", "steps"):
        parts = tuple(int(p) for p in val.split(","))
        if len(parts) != 3:
            raise ConfigError(f"'{key}' needs three comma-separated values")
        return parts
    if key == "colornorm":
        return val.lower() in ("1", "true", "yes", "on")
    if key in ("gamma1", "gamma2", "beta_start", "beta_end"):
        return float(val)
    return int(val)


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class SyntheticScene:
    """Labeled ground truth with its degraded LR counterpart."""

    hr: np.ndarray
    lr: np.ndarray
    texture_mask: np.ndarray   # (h, w) bool, True in textured regions
    params: dict = field(default_factory=dict)


def synth_degrade(hr: np.ndarray, blur_sigma: float, noise_sigma: float,
                  factor: int, seed: int = 0) -> np.ndarray:
    """Gaussian blur -> subsample -> additive Gaussian noise."""
    c, h, w = hr.shape
    if h % factor or w % factor:
        raise GridShapeError(f"{h}x{w} not divisible by factor {factor}")
    out = hr.astype(np.float64)
    if blur_sigma > 0:
        out = np.stack([gaussian_filter(ch, blur_sigma, mode="nearest")
                        for ch in out])
    out = out[:, ::factor, ::factor]
    if noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        out = out + noise_sigma * rng.standard_normal(out.shape)
    return out.astype(np.float32)


def make_scene(height: int, width: int, seed: int = 0, channels: int = 1,
               patch: int = 16, texture_frac: float = 0.5,
               texture_std: float = 1.5, blur_sigma: float = 0.8,
               noise_sigma: float = 0.05, factor: int = 2) -> SyntheticScene:
    """Smooth low-frequency base plus patch-aligned iid-noise texture blocks.

    Texture regions are aligned to the patch grid so every patch is either
    fully textured or fully smooth, which makes difficulty labels exact.
    """
    if height % patch or width % patch:
        raise ConfigError("scene dims must be multiples of the patch size")
    rng = np.random.Generator(np.random.PCG64(seed))
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    base = np.zeros((height, width))
    for _ in range(4):
        fy, fx = rng.uniform(0.5, 2.0, size=2)
        phy, phx = rng.uniform(0, 2 * np.pi, size=2)
        base += rng.uniform(0.1, 0.3) * np.cos(2 * np.pi * fy * yy / height + phy) \
            * np.cos(2 * np.pi * fx * xx / width + phx)
    tiles_y, tiles_x = height // patch, width // patch
    tex_tiles = rng.random((tiles_y, tiles_x)) < texture_frac
    mask = np.kron(tex_tiles, np.ones((patch, patch), dtype=bool))
    hr = np.stack([base.copy() for _ in range(channels)])
    hr[:, mask] += texture_std * rng.standard_normal((channels, int(mask.sum())))
    hr = hr.astype(np.float32)
    lr = synth_degrade(hr, blur_sigma, noise_sigma, factor, seed=seed + 1)
    return SyntheticScene(hr=hr, lr=lr, texture_mask=mask,
                          params={"texture_std": texture_std,
                                  "blur_sigma": blur_sigma,
                                  "noise_sigma": noise_sigma,
                                  "factor": factor, "seed": seed,
                                  "patch": patch,
                                  "texture_frac": texture_frac})


# ---------------------------------------------------------------------------
# simple encoder / decoder stand-in

def nearest_upsample(img: np.ndarray, f: int) -> np.ndarray:
    if f == 1:
        return img.copy()
    return np.repeat(np.repeat(img, f, axis=1), f, axis=2)


def encode(img: np.ndarray, d: int) -> np.ndarray:
    """Average-pool by d; d=1 is the identity."""
    if d == 1:
        return img.copy()
    c, h, w = img.shape
    if h % d or w % d:
        raise GridShapeError(f"{h}x{w} not divisible by d={d}")
    return img.reshape(c, h // d, d, w // d, d).mean(axis=(2, 4))


def decode(latent: np.ndarray, d: int) -> np.ndarray:
    """Nearest-neighbor unpool by d; d=1 is the identity."""
    if d == 1:
        return latent.copy()
    return nearest_upsample(latent, d)


def _pad_to_multiple(img: np.ndarray, m: int):
    _, h, w = img.shape
    ph = (-h) % m
    pw = (-w) % m
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return img, (h, w)


# ---------------------------------------------------------------------------
# inference

def superresolve(cfg: PipelineConfig, lr_image: np.ndarray, grm, denoiser,
                 memory=None, extractor=None, seed: int | None = None):
    """Full restoration pass; returns (sr_image, PgsReport).

    Stages: upsample -> encode -> coarse restore -> quantified map ->
    per-patch retrieval -> grouped sampling -> recompose -> decode ->
    wavelet color normalization.
    """
    seed = cfg.seed if seed is None else seed
    schedule = cfg.schedule()
    m = int(np.lcm(cfg.d, 1 << cfg.levels))
    try:
        lr_up = nearest_upsample(lr_image, cfg.factor)
        lr_up, orig = _pad_to_multiple(lr_up, m)
    except Exception as e:  # noqa: BLE001
        raise StageError("upsample", e) from e
    try:
        latent = encode(lr_up, cfg.d)
    except Exception as e:  # noqa: BLE001
        raise StageError("encode", e) from e
    try:
        y_hr, conf = grm(latent)
    except Exception as e:  # noqa: BLE001
        raise StageError("grm", e) from e
    try:
        patches, grid = decompose(y_hr, cfg.patch, cfg.overlap)
        qmap = build_qmap(conf, grid, cfg.thresholds())
    except Exception as e:  # noqa: BLE001
        raise StageError("qmap", e) from e
    prompts = None
    if memory is not None:
        if extractor is None:
            raise StageError("retrieve", ConfigError("memory given without extractor"))
        try:
            prompts = []
            for p in patches:
                try:
                    prompts.append(retrieve_topk(memory, p.astype(np.float32),
                                                 extractor, cfg.topk))
                except DegenerateQueryError:
                    prompts.append(None)  # unconditional fallback
        except Exception as e:  # noqa: BLE001
            raise StageError("retrieve", e) from e
    try:
        restored, report = run_pgs(denoiser, schedule, patches, qmap,
                                   cfg.group_config(), prompts=prompts,
                                   seed=seed)
    except Exception as e:  # noqa: BLE001
        raise StageError("pgs", e) from e
    try:
        merged = recompose(restored, grid)
        sr = decode(merged, cfg.d)
        if cfg.colornorm:
            sr = wavelet_color_normalize(sr, lr_up, cfg.levels)
        sr = sr[:, :orig[0], :orig[1]]
    except Exception as e:  # noqa: BLE001
        raise StageError("recompose", e) from e
    return sr.astype(np.float32), report


def _unified_cfg(cfg: PipelineConfig, n_unified: int) -> PipelineConfig:
    return replace(cfg, taus=(cfg.T,) * 3, steps=(n_unified,) * 3)


def benchmark(cfg: PipelineConfig, scene: SyntheticScene, grm, denoiser,
              memory=None, extractor=None, repeats: int = 1,
              n_unified: int | None = None) -> dict:
    """Paired adaptive-vs-unified runs on identical seeds."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    n_unified = cfg.steps[2] if n_unified is None else n_unified
    acc = {k: 0.0 for k in ("mse_pgs", "mse_unified", "nfe_pgs", "nfe_unified",
                            "wall_ms_pgs", "wall_ms_unified")}
    counts = None
    for r in range(repeats):
        seed = cfg.seed + r
        sr_a, rep_a = superresolve(cfg, scene.lr, grm, denoiser, memory,
                                   extractor, seed=seed)
        sr_u, rep_u = superresolve(_unified_cfg(cfg, n_unified), scene.lr, grm,
                                   denoiser, memory, extractor, seed=seed)
        acc["mse_pgs"] += float(np.mean((sr_a - scene.hr) ** 2))
        acc["mse_unified"] += float(np.mean((sr_u - scene.hr) ** 2))
        acc["nfe_pgs"] += rep_a.total_nfe
        acc["nfe_unified"] += rep_u.total_nfe
        acc["wall_ms_pgs"] += rep_a.wall_ms
        acc["wall_ms_unified"] += rep_u.wall_ms
        counts = rep_a.group_counts
    out = {k: v / repeats for k, v in acc.items()}
    out["ratio"] = out["nfe_pgs"] / out["nfe_unified"]
    out["group_counts"] = {g.value: counts[g] for g in counts}
    return out


def benchmark_sweep(cfg: PipelineConfig, scene: SyntheticScene, grm, denoiser,
                    variants: list[tuple[tuple[int, int, int], tuple[int, int, int]]],
                    memory=None, extractor=None) -> list[dict]:
    """Trade-off sweep over (taus, steps) variants; one result row each."""
    rows = []
    for taus, steps in variants:
        vcfg = replace(cfg, taus=taus, steps=steps)
        sr, rep = superresolve(vcfg, scene.lr, grm, denoiser, memory,
                               extractor, seed=cfg.seed)
        rows.append({"taus": taus, "steps": steps,
                     "mse": float(np.mean((sr - scene.hr) ** 2)),
                     "nfe": rep.total_nfe})
    return rows


def format_benchmark(result: dict) -> str:
    lines = []
    for g, n in result["group_counts"].items():
        lines.append(f"count_{g} {n}")
    for key in ("nfe_pgs", "nfe_unified", "ratio", "mse_pgs", "mse_unified",
                "wall_ms_pgs", "wall_ms_unified"):
        lines.append(f"{key} {result[key]:.6f}")
    return "\n".join(lines) + "\n"
