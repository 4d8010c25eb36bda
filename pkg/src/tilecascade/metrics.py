"""Verification instruments: radial spectral bands, seam energy, PSNR.

Radial band energies partition the non-DC power spectrum by normalized
radial frequency (1.0 = the outermost lattice frequency), so the band sum
always equals total AC power. Seam energy compares second differences on
patch-boundary lines against the whole-canvas statistic; 1.0 means the
boundaries are indistinguishable from the interior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .tiler import TileLayout

__all__ = [
    "SpectrumBands",
    "DEFAULT_BAND_EDGES",
    "radial_band_energy",
    "seam_energy",
    "psnr",
    "band_correlation",
]

DEFAULT_BAND_EDGES = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)


@dataclass(frozen=True)
class SpectrumBands:
    edges: tuple
    energies: tuple

    @property
    def low(self) -> float:
        return self.energies[0]

    @property
    def high(self) -> float:
        return self.energies[-1]

    def total(self) -> float:
        return float(sum(self.energies))


def _check_fft_size(h: int, w: int) -> None:
    def ok(n):
        return n <= 256 or (n & (n - 1)) == 0

    if not (ok(h) and ok(w)):
        raise ValueError(f"spectral ops need power-of-two dims or dims <= 256, got {h}x{w}")


def _radius_grid(h: int, w: int) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.sqrt(fy**2 + fx**2)
    return r / r.max()


def radial_band_energy(g: Grid, edges: tuple = DEFAULT_BAND_EDGES) -> SpectrumBands:
    """Per-band power |F|^2 summed over channels, DC excluded from every band."""
    if len(edges) < 2 or any(edges[i] >= edges[i + 1] for i in range(len(edges) - 1)):
        raise ValueError(f"band edges must be strictly increasing, got {edges}")
    if edges[0] != 0.0 or edges[-1] != 1.0:
        raise ValueError("band edges must start at 0 and end at 1")
    _check_fft_size(g.height, g.width)
    r = _radius_grid(g.height, g.width)
    power = np.zeros_like(r)
    for ch in range(g.channels):
        power += np.abs(np.fft.fft2(g.data[ch].astype(np.float64))) ** 2
    nonzero = r > 0  # drops DC only
    energies = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        band = nonzero & (r >= lo) & ((r < hi) if hi < 1.0 else (r <= 1.0))
        energies.append(float(power[band].sum()))
    return SpectrumBands(edges=tuple(edges), energies=tuple(energies))


def _boundary_lines(offsets: tuple, patch: int, canvas: int) -> list:
    lines = set()
    for off in offsets:
        lines.add(off)
        lines.add(off + patch - 1)
    return sorted(x for x in lines if 1 <= x <= canvas - 2)


def seam_energy(g: Grid, layout: TileLayout) -> float:
    """Boundary-line second-difference magnitude relative to the whole canvas."""
    if (g.height, g.width) != (layout.canvas_h, layout.canvas_w):
        raise ValueError("grid dims do not match layout canvas")
    a = g.astype64()
    d2v = np.abs(a[:, :-2, :] - 2.0 * a[:, 1:-1, :] + a[:, 2:, :])  # centered at rows 1..H-2
    d2h = np.abs(a[:, :, :-2] - 2.0 * a[:, :, 1:-1] + a[:, :, 2:])
    rows = _boundary_lines(layout.row_offsets(), layout.patch_h, layout.canvas_h)
    cols = _boundary_lines(layout.col_offsets(), layout.patch_w, layout.canvas_w)
    boundary_vals = []
    if rows:
        boundary_vals.append(d2v[:, [r - 1 for r in rows], :].reshape(-1))
    if cols:
        boundary_vals.append(d2h[:, :, [c - 1 for c in cols]].reshape(-1))
    if not boundary_vals:
        return 1.0
    num = float(np.concatenate(boundary_vals).mean())
    den = float(np.concatenate([d2v.reshape(-1), d2h.reshape(-1)]).mean())
    if den < 1e-300:
        return 1.0 if num < 1e-300 else float("inf")
    return num / den


def psnr(a: Grid, b: Grid, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs report +inf."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype64() - b.astype64()) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def _band_filter(arr: np.ndarray, band: tuple) -> np.ndarray:
    lo, hi = band
    h, w = arr.shape[1], arr.shape[2]
    r = _radius_grid(h, w)
    mask = (r > 0) & (r >= lo) & ((r < hi) if hi < 1.0 else (r <= 1.0))
    out = np.empty_like(arr)
    for ch in range(arr.shape[0]):
        spec = np.fft.fft2(arr[ch]) * mask
        out[ch] = np.fft.ifft2(spec).real
    return out


def band_correlation(a: Grid, b: Grid, band: tuple) -> float:
    """Pearson correlation of the two grids after ideal radial band filtering."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    _check_fft_size(a.height, a.width)
    fa = _band_filter(a.astype64(), band).reshape(-1)
    fb = _band_filter(b.astype64(), band).reshape(-1)
    fa -= fa.mean()
    fb -= fb.mean()
    denom = np.linalg.norm(fa) * np.linalg.norm(fb)
    if denom < 1e-300:
        return 0.0
    return float(np.dot(fa, fb) / denom)
