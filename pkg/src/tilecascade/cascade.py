"""Two-stage cascade: repeated x2 upscale-then-refine levels over tiled latents.

Each level doubles height and width: the latent is upsampled (pixel-space by
default: decode, bicubic x2, encode), tiled into overlapping patches at the
model's native patch size, every patch is partially inverted to depth K, and
the patches walk the truncated reverse grid in lockstep; after every reverse
step the patch latents are blended back into a canvas before the next step.

NFE follows the usual step accounting: reverse-pass denoiser evaluations
(patches x reverse steps). Inversion evaluations are tracked separately.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .blend import build_masks, blend
from .ddim import (
    GuidanceContext,
    InjectionConfig,
    ddim_reverse_step,
    inject_noise,
    partial_invert,
)
from .grid import Codec, Grid, decode, encode, interpolate_bicubic
from .metrics import DEFAULT_BAND_EDGES, radial_band_energy, seam_energy
from .rng import StreamKey
from .schedule import Schedule, StepGrid, equispaced_grid, truncate_grid
from .tiler import build_layout, extract

__all__ = ["LevelSetting", "CascadeConfig", "LevelReport", "RunManifest", "up", "cascade_step", "run_cascade"]


@dataclass(frozen=True)
class LevelSetting:
    steps: int  # few-step grid size S
    k: int  # inversion depth, must lie on the grid


@dataclass(frozen=True)
class CascadeConfig:
    levels: int
    patch_h: int
    patch_w: int
    overlap: float = 0.5
    up_space: str = "pixel"
    blend_mode: str = "gaussian_feather"
    blend_sigma: float = None
    level_settings: tuple = (LevelSetting(steps=4, k=249),)
    lam: float = 0.0
    codec: Codec = Codec()
    seed: int = 0
    threads: int = 1
    schedule: Schedule = None
    guidance: GuidanceContext = GuidanceContext()
    compute_metrics: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("cascade needs at least one level")
        if self.up_space not in ("pixel", "latent"):
            raise ValueError(f"unknown up_space {self.up_space!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.schedule is None:
            raise ValueError("cascade config needs a schedule")

    def setting_for(self, level: int) -> LevelSetting:
        if len(self.level_settings) == 1:
            return self.level_settings[0]
        return self.level_settings[level]

    def grid_for(self, level: int) -> StepGrid:
        s = self.setting_for(level)
        full = equispaced_grid(self.schedule, s.steps)
        return truncate_grid(full, s.k)


@dataclass
class LevelReport:
    level: int
    canvas: tuple
    patch_count: int
    steps: int
    nfe: int
    inversion_calls: int
    wall_ms: float = 0.0
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        # wall_ms stays out: manifests must be bit-identical across runs.
        return {
            "level": self.level,
            "canvas": list(self.canvas),
            "patch_count": self.patch_count,
            "steps": self.steps,
            "nfe": self.nfe,
            "inversion_calls": self.inversion_calls,
            "metrics": self.metrics,
        }


@dataclass
class RunManifest:
    seed: int
    config: dict
    levels: list

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "levels": [lv.to_dict() for lv in self.levels],
            "total_nfe": sum(lv.nfe for lv in self.levels),
        }

    def timing(self) -> dict:
        return {
            "levels": [{"level": lv.level, "wall_ms": lv.wall_ms} for lv in self.levels],
            "total_wall_ms": sum(lv.wall_ms for lv in self.levels),
        }


def up(z0: Grid, cfg: CascadeConfig) -> Grid:
    """Double spatial dims: bicubic in pixel space (through the codec) or in latent space."""
    if cfg.up_space == "latent":
        return interpolate_bicubic(z0, 2)
    pixel = decode(cfg.codec, z0)
    return encode(cfg.codec, interpolate_bicubic(pixel, 2))


def _map_patches(fn, items, threads: int, concurrent_ok: bool):
    if threads > 1 and concurrent_ok and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def cascade_step(z0: Grid, den, cfg: CascadeConfig, level: int) -> tuple:
    """One upscale-and-refine level; returns (refined canvas, LevelReport)."""
    if not 0 <= level < cfg.levels:
        raise ValueError(f"level {level} outside [0, {cfg.levels})")
    t_start = time.perf_counter()
    sched = cfg.schedule
    grid = cfg.grid_for(level)
    coarse = up(z0, cfg)
    layout = build_layout(coarse.height, coarse.width, cfg.patch_h, cfg.patch_w, cfg.overlap)
    masks = build_masks(layout, cfg.blend_mode, cfg.blend_sigma)
    concurrent_ok = den.capabilities.concurrent_safe
    base_key = StreamKey(cfg.seed, level=level)

    def invert_one(i: int) -> Grid:
        return partial_invert(extract(coarse, layout, i), den, cfg.guidance, grid, sched)

    latents = _map_patches(invert_one, list(range(layout.count)), cfg.threads, concurrent_ok)
    inversion_calls = layout.count * grid.steps

    nfe = 0
    ts = list(grid.timesteps)
    canvas = None
    for j, t in enumerate(ts):
        t_prev = ts[j + 1] if j + 1 < len(ts) else -1

        def step_one(i: int) -> Grid:
            z = latents[i]
            eps = den.predict(z, t, cfg.guidance)
            inj = InjectionConfig(cfg.lam, base_key.with_patch(i))
            eps = inject_noise(eps, inj, step=j)
            return ddim_reverse_step(z, eps, t, t_prev, sched)

        stepped = _map_patches(step_one, list(range(layout.count)), cfg.threads, concurrent_ok)
        nfe += layout.count
        canvas = blend(stepped, layout, masks)
        if j + 1 < len(ts):
            latents = [extract(canvas, layout, i) for i in range(layout.count)]

    report = LevelReport(
        level=level,
        canvas=(canvas.height, canvas.width),
        patch_count=layout.count,
        steps=grid.steps,
        nfe=nfe,
        inversion_calls=inversion_calls,
        wall_ms=(time.perf_counter() - t_start) * 1000.0,
    )
    if cfg.compute_metrics:
        bands = radial_band_energy(canvas, DEFAULT_BAND_EDGES)
        report.metrics = {
            "band_edges": list(bands.edges),
            "band_energies": list(bands.energies),
            "seam_ratio": seam_energy(canvas, layout),
        }
    report.metrics["layout"] = layout.to_dict()
    return canvas, report


def run_cascade(z0_base: Grid, den, cfg: CascadeConfig, on_level=None) -> tuple:
    """Apply cascade_step for every level; returns (final grid, manifest).

    on_level(level, grid, report), when given, observes each level's output.
    """
    z = z0_base
    reports = []
    for level in range(cfg.levels):
        z, report = cascade_step(z, den, cfg, level)
        reports.append(report)
        if on_level is not None:
            on_level(level, z, report)
    manifest = RunManifest(seed=cfg.seed, config=_config_echo(cfg), levels=reports)
    return z, manifest


def _config_echo(cfg: CascadeConfig) -> dict:
    return {
        "levels": cfg.levels,
        "patch": [cfg.patch_h, cfg.patch_w],
        "overlap": cfg.overlap,
        "up_space": cfg.up_space,
        "blend": {"mode": cfg.blend_mode, "sigma": cfg.blend_sigma},
        "level_settings": [{"steps": s.steps, "k": s.k} for s in cfg.level_settings],
        "lambda": cfg.lam,
        "codec": {"kind": cfg.codec.kind, "factor": cfg.codec.factor},
        "seed": cfg.seed,
        "schedule": {
            "kind": cfg.schedule.kind,
            "steps": cfg.schedule.t_total,
            "beta_start": cfg.schedule.beta_start,
            "beta_end": cfg.schedule.beta_end,
        },
        "guidance": {"prompt": cfg.guidance.prompt, "scale": cfg.guidance.guidance_scale},
    }
