"""Command-line front end: generate, ablate, bench, masks, inspect.

Exit codes: 0 ok, 2 config, 3 io, 4 protocol, 5 numeric.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import time

import numpy as np

from .blend import build_masks
from .cascade import run_cascade, up
from .config import build_setup, load_config
from .errors import (
    BridgeConnectionError,
    BridgeTimeoutError,
    ConfigError,
    GridIoError,
    MalformedFrameError,
    NumericError,
    ProtocolError,
    RemoteFailureError,
)
from .grid import Grid
from .gridio import atomic_write_bytes, read_pnm, read_rgf, write_pgm, write_ppm, write_rgf
from .metrics import radial_band_energy, seam_energy
from .tiler import build_layout

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_PROTOCOL = 4
EXIT_NUMERIC = 5


def _error_label(e: Exception) -> tuple:
    if isinstance(e, BridgeConnectionError):
        return "protocol: connection", EXIT_PROTOCOL
    if isinstance(e, BridgeTimeoutError):
        return "protocol: timeout", EXIT_PROTOCOL
    if isinstance(e, MalformedFrameError):
        return "protocol: malformed-frame", EXIT_PROTOCOL
    if isinstance(e, RemoteFailureError):
        return "protocol: remote-failure", EXIT_PROTOCOL
    if isinstance(e, ProtocolError):
        return "protocol", EXIT_PROTOCOL
    if isinstance(e, ConfigError):
        return "config", EXIT_CONFIG
    if isinstance(e, GridIoError):
        return "io", EXIT_IO
    if isinstance(e, OSError):
        return "io", EXIT_IO
    if isinstance(e, (NumericError, FloatingPointError)):
        return "numeric", EXIT_NUMERIC
    return "numeric", EXIT_NUMERIC


def _dump_json(path: str, doc: dict) -> None:
    atomic_write_bytes(path, json.dumps(doc, indent=2, sort_keys=True).encode("utf-8") + b"\n")


def _preview(path_base: str, g: Grid) -> str:
    lo = float(g.data.min())
    hi = float(g.data.max())
    scale = (g.data - lo) / (hi - lo) if hi > lo else np.zeros_like(g.data)
    vis = Grid.from_array(scale)
    if g.channels == 3:
        write_ppm(path_base + ".ppm", vis)
        return path_base + ".ppm"
    if g.channels != 1:
        vis = Grid.from_array(scale.mean(axis=0, keepdims=True))
    write_pgm(path_base + ".pgm", vis)
    return path_base + ".pgm"


def cmd_generate(args) -> int:
    doc = load_config(args.config)
    setup = build_setup(doc, seed_override=args.seed, threads_override=args.threads)
    out_dir = args.output or setup.output_dir
    os.makedirs(out_dir, exist_ok=True)

    def save_level(level, grid, report):
        base = os.path.join(out_dir, f"level_{level:03d}")
        write_rgf(base + ".rgf", grid)
        _preview(base, grid)

    final, manifest = run_cascade(setup.base, setup.denoiser, setup.cascade, on_level=save_level)
    _dump_json(os.path.join(out_dir, "manifest.json"), manifest.to_dict())
    _dump_json(os.path.join(out_dir, "timing.json"), manifest.timing())
    print(f"generate: {setup.cascade.levels} level(s), final {final.channels}x{final.height}x{final.width}, "
          f"total NFE {sum(lv.nfe for lv in manifest.levels)}, outputs in {out_dir}")
    return EXIT_OK


def _chain_recon_error(setup, cfg):
    # Round-trip error of the refinement chain at this variant's settings:
    # invert the base latent to K, denoise back, compare. Only defined when
    # the input already lives at the denoiser's patch size.
    from .ddim import InjectionConfig, refine_latent
    from .rng import StreamKey

    base = setup.base
    if (base.height, base.width) != (cfg.patch_h, cfg.patch_w):
        return ""
    grid = cfg.grid_for(0)
    inj = InjectionConfig(cfg.lam, StreamKey(cfg.seed))
    out = refine_latent(base, setup.denoiser, cfg.guidance, grid, cfg.schedule, inj)
    return float(np.sqrt(np.mean((out.astype64() - base.astype64()) ** 2)))


def _variant_rows(setup, variants):
    rows = []
    for name, cfg in variants:
        t0 = time.perf_counter()
        final, manifest = run_cascade(setup.base, setup.denoiser, cfg)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        bands = radial_band_energy(final)
        layout = build_layout(final.height, final.width, cfg.patch_h, cfg.patch_w, cfg.overlap)
        rows.append(
            {
                "variant": name,
                "nfe": sum(lv.nfe for lv in manifest.levels),
                "wall_ms": round(wall_ms, 3),
                "seam_ratio": seam_energy(final, layout),
                "band_low": bands.energies[0],
                "band_mid": bands.energies[1],
                "band_high": bands.energies[2],
                "recon_error": _chain_recon_error(setup, cfg),
            }
        )
    return rows


def _conflict_rows(cfg):
    # Paired blend comparison on the canonical conflicting-constant-patches
    # fixture: alternating 0/1 patches on a 3x3 half-overlap layout.
    from .blend import blend, build_masks, one_hot_stitch

    lay = build_layout(2 * cfg.patch_h, 2 * cfg.patch_w, cfg.patch_h, cfg.patch_w, 0.5)
    side = len(lay.row_offsets())
    patches = []
    for i in range(lay.count):
        pr, pc = divmod(i, side)
        patches.append(Grid.full(1, cfg.patch_h, cfg.patch_w, float((pr + pc) % 2)))
    canvases = {
        "conflict-hard": one_hot_stitch(patches, lay),
        "conflict-uniform": blend(patches, lay, build_masks(lay, "uniform")),
        "conflict-gaussian": blend(patches, lay, build_masks(lay, "gaussian_feather")),
    }
    rows = []
    for name, canvas in canvases.items():
        rows.append(
            {
                "variant": name,
                "nfe": 0,
                "wall_ms": 0.0,
                "seam_ratio": seam_energy(canvas, lay),
                "band_low": "",
                "band_mid": "",
                "band_high": "",
                "recon_error": "",
            }
        )
    return rows


def cmd_ablate(args) -> int:
    doc = load_config(args.config)
    setup = build_setup(doc, seed_override=args.seed, threads_override=args.threads)
    cfg = setup.cascade
    sweep_k = [249, 499, 749, 999]
    sweep_lambda = [0.0, 0.7, 0.8, 0.9, 0.95]

    from .cascade import LevelSetting  # local alias keeps module header short

    variants = [("baseline-full-inversion", dataclasses.replace(cfg, level_settings=(LevelSetting(50, 999),), lam=0.0))]
    for k in sweep_k:
        variants.append((f"k-{k}", dataclasses.replace(cfg, level_settings=(LevelSetting(4, k),), lam=0.0)))
    for mode in ("uniform", "gaussian_feather"):
        variants.append((f"blend-{mode}", dataclasses.replace(cfg, blend_mode=mode, lam=0.0)))
    for lam in sweep_lambda:
        variants.append((f"lambda-{lam:g}", dataclasses.replace(cfg, lam=lam)))

    rows = _variant_rows(setup, variants) + _conflict_rows(cfg)
    out_dir = args.output or setup.output_dir
    os.makedirs(out_dir, exist_ok=True)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    path = os.path.join(out_dir, "ablate.csv")
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))
    print(f"ablate: wrote {len(rows)} variants to {path}")
    return EXIT_OK


def cmd_bench(args) -> int:
    doc = load_config(args.config)
    setup = build_setup(doc, seed_override=args.seed, threads_override=args.threads)
    cfg = setup.cascade
    from .cascade import LevelSetting

    one_step = dataclasses.replace(cfg, level_settings=(LevelSetting(4, 249),), lam=0.0)
    full = dataclasses.replace(cfg, level_settings=(LevelSetting(50, 999),), lam=0.0)
    results = {}
    for name, variant in (("one-step-k249", one_step), ("full-inversion-50", full)):
        t0 = time.perf_counter()
        _, manifest = run_cascade(setup.base, setup.denoiser, variant)
        results[name] = {
            "nfe": sum(lv.nfe for lv in manifest.levels),
            "wall_ms": (time.perf_counter() - t0) * 1000.0,
            "patches": [lv.patch_count for lv in manifest.levels],
        }
    ratio = results["full-inversion-50"]["nfe"] / results["one-step-k249"]["nfe"]
    results["nfe_ratio"] = ratio
    out_dir = args.output or setup.output_dir
    os.makedirs(out_dir, exist_ok=True)
    _dump_json(os.path.join(out_dir, "bench.json"), results)
    print(
        f"bench: one-step NFE {results['one-step-k249']['nfe']} "
        f"({results['one-step-k249']['wall_ms']:.1f} ms) vs "
        f"full-inversion NFE {results['full-inversion-50']['nfe']} "
        f"({results['full-inversion-50']['wall_ms']:.1f} ms), ratio {ratio:g}x"
    )
    if ratio != 50.0:
        print(f"error: numeric: NFE ratio {ratio:g} != 50 for equal layouts", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_masks(args) -> int:
    doc = load_config(args.config)
    setup = build_setup(doc, seed_override=args.seed, threads_override=args.threads)
    cfg = setup.cascade
    canvas_h, canvas_w = setup.base.height * 2, setup.base.width * 2
    layout = build_layout(canvas_h, canvas_w, cfg.patch_h, cfg.patch_w, cfg.overlap)
    masks = build_masks(layout, cfg.blend_mode, cfg.blend_sigma)
    out_dir = args.output or setup.output_dir
    os.makedirs(out_dir, exist_ok=True)
    for i, g in enumerate(masks.weight_grids()):
        write_rgf(os.path.join(out_dir, f"mask_{i:03d}.rgf"), g)
    print(f"masks: wrote {layout.count} weight grids ({masks.mode}, sigma={masks.sigma:g}) to {out_dir}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = args.path
    g = read_pnm(path) if path.endswith((".pgm", ".ppm")) else read_rgf(path)
    d = g.data
    print(f"{path}: {g.channels}x{g.height}x{g.width} float32")
    print(f"  min {d.min():.6g}  max {d.max():.6g}  mean {d.mean():.6g}  std {d.std():.6g}")
    print(f"  finite: {bool(np.isfinite(d).all())}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilecascade", description=__doc__)
    parser.add_argument("--config", help="run config JSON path")
    parser.add_argument("--seed", type=int, default=None, help="override config seed (u64)")
    parser.add_argument("--threads", type=int, default=None, help="override worker cap")
    parser.add_argument("--output", default=None, help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", help="run the cascade and write grids + manifest")
    sub.add_parser("ablate", help="sweep K, blend mode, and lambda; write CSV")
    sub.add_parser("bench", help="compare one-step vs 50-step NFE and wall time")
    sub.add_parser("masks", help="dump blend weight masks as RGF1 grids")
    p_inspect = sub.add_parser("inspect", help="print grid statistics")
    p_inspect.add_argument("path")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "ablate": cmd_ablate,
    "bench": cmd_bench,
    "masks": cmd_masks,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.command != "inspect" and not args.config:
        print("error: config: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:  # noqa: BLE001 - CLI boundary maps errors to exit codes
        label, code = _error_label(e)
        print(f"error: {label}: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
