"""Patch blending: uniform averaging and Gaussian-feathered weight masks.

Feathering starts from the hard ownership mask (every cell assigned to the
covering patch with the nearest center) and blurs it with a Gaussian, so
cells nearer a patch center follow that patch more strongly and transitions
sit mid-overlap. Per-cell normalization makes every mask set an exact
partition of unity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .grid import Grid
from .tiler import TileLayout

__all__ = ["BlendMaskSet", "build_masks", "blend", "one_hot_stitch", "default_sigma"]

MODES = ("uniform", "gaussian_feather")


@dataclass(frozen=True)
class BlendMaskSet:
    """Normalized per-patch weight fields (each patch_h x patch_w, in [0,1])."""

    mode: str
    sigma: float
    weights: tuple  # float64 arrays, one per patch, summing to 1 per canvas cell

    def weight_grids(self) -> list:
        """Weights as 1-channel Grids, e.g. for RGF1 export."""
        return [Grid.from_array(w[None, :, :]) for w in self.weights]


def default_sigma(layout: TileLayout) -> float:
    """A quarter of the overlap width, so +-2 sigma of feather stays inside it."""
    widths = []
    for offs, patch in ((layout.row_offsets(), layout.patch_h), (layout.col_offsets(), layout.patch_w)):
        if len(offs) > 1:
            widths.append(patch - min(np.diff(np.asarray(offs))))
    if not widths:
        return 1.0
    return max(float(min(widths)) / 4.0, 0.5)


def ownership_map(layout: TileLayout) -> np.ndarray:
    """Hard partition of the canvas: each cell's covering patch with nearest center.

    Ties break toward the lower patch index. This is the binary mask the
    feather blurs; its regions always lie inside their patch windows.
    """
    h, w = layout.canvas_h, layout.canvas_w
    best = np.full((h, w), np.inf, dtype=np.float64)
    winner = np.full((h, w), -1, dtype=np.int64)
    rr, cc = np.mgrid[0:h, 0:w]
    for i, (r, c) in enumerate(layout.offsets):
        cy = r + (layout.patch_h - 1) / 2.0
        cx = c + (layout.patch_w - 1) / 2.0
        win = (slice(r, r + layout.patch_h), slice(c, c + layout.patch_w))
        d = (rr[win] - cy) ** 2 + (cc[win] - cx) ** 2
        take = d < best[win]
        best[win][take] = d[take]
        winner[win][take] = i
    return winner


def build_masks(layout: TileLayout, mode: str, sigma: float = None) -> BlendMaskSet:
    """Per-patch weights from the (optionally blurred) ownership mask, normalized.

    uniform: all-ones raw weights, i.e. plain averaging in overlaps.
    gaussian_feather: each patch's hard ownership indicator is blurred on the
    canvas (kernel truncated at 3 sigma, replicate border so canvas-edge
    cells keep full weight) and cropped back to the patch window.
    """
    if mode not in MODES:
        raise ValueError(f"unknown blend mode {mode!r}")
    if mode == "gaussian_feather":
        if sigma is None:
            sigma = default_sigma(layout)
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        owner = ownership_map(layout)
    else:
        sigma = 0.0

    raws = []
    acc = np.zeros((layout.canvas_h, layout.canvas_w), dtype=np.float64)
    for i, (r, c) in enumerate(layout.offsets):
        if mode == "uniform":
            raw = np.ones((layout.patch_h, layout.patch_w), dtype=np.float64)
        else:
            blurred = gaussian_filter((owner == i).astype(np.float64), sigma=sigma, truncate=3.0, mode="nearest")
            raw = blurred[r : r + layout.patch_h, c : c + layout.patch_w].copy()
        acc[r : r + layout.patch_h, c : c + layout.patch_w] += raw
        raws.append(raw)

    weights = []
    for (r, c), raw in zip(layout.offsets, raws):
        weights.append(raw / acc[r : r + layout.patch_h, c : c + layout.patch_w])
    return BlendMaskSet(mode=mode, sigma=float(sigma), weights=tuple(weights))


def _check_patches(patches, layout: TileLayout) -> None:
    if len(patches) != layout.count:
        raise ValueError(f"expected {layout.count} patches, got {len(patches)}")
    for p in patches:
        if (p.height, p.width) != (layout.patch_h, layout.patch_w):
            raise ValueError(
                f"patch {p.height}x{p.width} does not match layout "
                f"{layout.patch_h}x{layout.patch_w}"
            )
        if p.channels != patches[0].channels:
            raise ValueError("patches disagree on channel count")


def blend(patches, layout: TileLayout, masks: BlendMaskSet) -> Grid:
    """Weighted recomposition: canvas(p) = sum_i w_i(p) P_i(p) / sum_i w_i(p).

    Accumulation runs in fixed patch order in float64 so results are
    reproducible regardless of how patches were computed.
    """
    _check_patches(patches, layout)
    if len(masks.weights) != layout.count:
        raise ValueError("mask count does not match layout")
    ch = patches[0].channels
    acc = np.zeros((ch, layout.canvas_h, layout.canvas_w), dtype=np.float64)
    wsum = np.zeros((layout.canvas_h, layout.canvas_w), dtype=np.float64)
    for (r, c), patch, w in zip(layout.offsets, patches, masks.weights):
        acc[:, r : r + layout.patch_h, c : c + layout.patch_w] += w * patch.astype64()
        wsum[r : r + layout.patch_h, c : c + layout.patch_w] += w
    return Grid.from_array(acc / wsum)


def one_hot_stitch(patches, layout: TileLayout) -> Grid:
    """Hard no-blending baseline: paste patches in order, later ones overwrite.

    Overlap cells take the last covering patch wholesale, leaving the
    discontinuity exactly on patch window edges. Used as the reference when
    quantifying seam artifacts.
    """
    _check_patches(patches, layout)
    ch = patches[0].channels
    out = np.zeros((ch, layout.canvas_h, layout.canvas_w), dtype=np.float64)
    for (r, c), patch in zip(layout.offsets, patches):
        out[:, r : r + layout.patch_h, c : c + layout.patch_w] = patch.astype64()
    return Grid.from_array(out)
