"""Overlapping patch layouts over a canvas and the patch-count law.

Along one dimension, covering an upscale factor M with patches overlapping
by fraction o requires n patches where n - (n-1)*o = M, i.e.
n = ceil((M - o) / (1 - o)). Offsets are spaced evenly from 0 to
canvas - patch with the last patch flush against the canvas edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import ceil

import numpy as np

from .grid import Grid

__all__ = ["TileLayout", "patch_count", "build_layout", "extract"]


@dataclass(frozen=True)
class TileLayout:
    patch_h: int
    patch_w: int
    canvas_h: int
    canvas_w: int
    overlap: float
    offsets: tuple  # ((row, col), ...) row-major patch order

    @property
    def count(self) -> int:
        return len(self.offsets)

    def row_offsets(self) -> tuple:
        return tuple(sorted({r for r, _ in self.offsets}))

    def col_offsets(self) -> tuple:
        return tuple(sorted({c for _, c in self.offsets}))

    def to_dict(self) -> dict:
        return {
            "patch": [self.patch_h, self.patch_w],
            "canvas": [self.canvas_h, self.canvas_w],
            "overlap": self.overlap,
            "offsets": [list(o) for o in self.offsets],
        }


def _check_overlap(o) -> Fraction:
    of = Fraction(*float(o).as_integer_ratio())
    if not 0 <= of < 1:
        raise ValueError(f"overlap fraction must lie in [0, 1), got {o}")
    return of


def patch_count(m, o) -> int:
    """Patches per dimension for upscale factor M at overlap o: ceil((M-o)/(1-o))."""
    of = _check_overlap(o)
    mf = Fraction(*float(m).as_integer_ratio()) if not isinstance(m, (int, Fraction)) else Fraction(m)
    if mf < 1:
        raise ValueError(f"upscale factor must be >= 1, got {m}")
    return int(ceil((mf - of) / (1 - of)))


def _axis_offsets(canvas: int, patch: int, o: Fraction) -> tuple:
    if patch > canvas:
        raise ValueError(f"patch {patch} larger than canvas {canvas}")
    n = patch_count(Fraction(canvas, patch), o)
    span = canvas - patch
    if n == 1 or span == 0:
        return (0,)
    raw = [span * i / (n - 1) for i in range(n)]
    offs = [int(np.floor(x + 0.5)) for x in raw]
    # Mirror the rounding so reflected layouts stay identical.
    for i in range(n // 2):
        offs[n - 1 - i] = span - offs[i]
    return tuple(sorted(set(offs)))


def build_layout(canvas_h: int, canvas_w: int, patch_h: int, patch_w: int, o) -> TileLayout:
    """Row-major layout of fully-inside patches covering the whole canvas."""
    of = _check_overlap(o)
    rows = _axis_offsets(canvas_h, patch_h, of)
    cols = _axis_offsets(canvas_w, patch_w, of)
    # Coverage guard: consecutive offsets may not leave gaps.
    for offs, patch, canvas in ((rows, patch_h, canvas_h), (cols, patch_w, canvas_w)):
        gaps = np.diff(np.asarray(offs + (canvas - patch,), dtype=np.int64))
        if len(gaps) and gaps.max(initial=0) > patch:
            raise ValueError("layout leaves uncovered cells")
    offsets = tuple((r, c) for r in rows for c in cols)
    return TileLayout(patch_h, patch_w, canvas_h, canvas_w, float(o), offsets)


def extract(g: Grid, layout: TileLayout, i: int) -> Grid:
    """Copy patch window i out of the canvas."""
    if not 0 <= i < layout.count:
        raise IndexError(f"patch index {i} out of range [0, {layout.count})")
    if (g.height, g.width) != (layout.canvas_h, layout.canvas_w):
        raise ValueError(
            f"grid {g.height}x{g.width} does not match layout canvas "
            f"{layout.canvas_h}x{layout.canvas_w}"
        )
    r, c = layout.offsets[i]
    window = g.data[:, r : r + layout.patch_h, c : c + layout.patch_w]
    return Grid.from_array(window.copy())
