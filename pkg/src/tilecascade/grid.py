"""Dense float32 grids, integer-factor resampling, and the latent/pixel codec.

A Grid is the single carrier for latents and pixel images: a (channels,
height, width) float32 array, channel-major and C-contiguous so that the
in-memory bytes equal the serialized row-major layout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

__all__ = ["Grid", "Codec", "interpolate_bicubic", "encode", "decode"]


@dataclass(frozen=True)
class Grid:
    """Channel-major float32 tensor. All public operations keep values finite."""

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.ndim != 3:
            raise ValueError("Grid data must be a (channels, height, width) array")
        if arr.dtype != np.float32:
            raise ValueError(f"Grid data must be float32, got {arr.dtype}")
        if not arr.flags.c_contiguous:
            raise ValueError("Grid data must be C-contiguous")
        if min(arr.shape) < 1:
            raise ValueError(f"Grid dims must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("Grid contains NaN or Inf")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Grid":
        """Coerce any 3-d array-like to a valid Grid (copies unless already conforming)."""
        a = np.ascontiguousarray(arr, dtype=np.float32)
        return cls(a)

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "Grid":
        return cls(np.zeros((channels, height, width), dtype=np.float32))

    @classmethod
    def full(cls, channels: int, height: int, width: int, value: float) -> "Grid":
        return cls(np.full((channels, height, width), value, dtype=np.float32))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def copy(self) -> "Grid":
        return Grid(self.data.copy())

    def astype64(self) -> np.ndarray:
        """Float64 view for internal math; callers cast back via from_array."""
        return self.data.astype(np.float64)


@dataclass(frozen=True)
class Codec:
    """Stand-in for the latent/pixel autoencoder pair.

    identity: pixel space is latent space (factor forced to 1).
    boxpool: encode = factor x factor block mean, decode = bilinear upsample.
    """

    kind: str = "identity"
    factor: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "boxpool"):
            raise ValueError(f"unknown codec kind {self.kind!r}")
        if self.factor < 1:
            raise ValueError("codec factor must be >= 1")
        if self.kind == "identity" and self.factor != 1:
            raise ValueError("identity codec requires factor 1")


# Catmull-Rom cubic convolution coefficient.
_CR_A = -0.5


def _cubic_weight(x: np.ndarray) -> np.ndarray:
    """Catmull-Rom kernel, vectorized over distances |x| (support [0, 2))."""
    a = _CR_A
    ax = np.abs(x)
    w = np.zeros_like(ax)
    inner = ax <= 1.0
    outer = (ax > 1.0) & (ax < 2.0)
    w[inner] = (a + 2.0) * ax[inner] ** 3 - (a + 3.0) * ax[inner] ** 2 + 1.0
    w[outer] = a * ax[outer] ** 3 - 5.0 * a * ax[outer] ** 2 + 8.0 * a * ax[outer] - 4.0 * a
    return w


def _axis_taps(n_in: int, scale: int, ntaps: int) -> tuple:
    """Source indices (clamped) and kernel weights for one upsampled axis.

    Output sample i sits at source coordinate (i + 0.5)/scale - 0.5
    (center-aligned). Returns idx (n_out, ntaps) int and w (n_out, ntaps) float64.
    """
    n_out = n_in * scale
    coords = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    base = np.floor(coords).astype(np.int64)
    frac = coords - base
    offsets = np.arange(-(ntaps // 2 - 1), ntaps // 2 + 1, dtype=np.int64)
    idx = base[:, None] + offsets[None, :]
    dist = frac[:, None] - offsets[None, :].astype(np.float64)
    if ntaps == 4:
        w = _cubic_weight(dist)
    elif ntaps == 2:
        w = 1.0 - np.abs(dist)
    else:
        raise ValueError("only 2-tap and 4-tap kernels supported")
    np.clip(idx, 0, n_in - 1, out=idx)
    return idx, w


def _upsample_separable(arr: np.ndarray, scale: int, ntaps: int) -> np.ndarray:
    """Separable kernel upsampling along height then width, clamp-to-edge."""
    out = arr.astype(np.float64)
    idx_h, w_h = _axis_taps(arr.shape[1], scale, ntaps)
    out = np.einsum("cktw,kt->ckw", out[:, idx_h, :], w_h, optimize=True)
    idx_w, w_w = _axis_taps(arr.shape[2], scale, ntaps)
    out = np.einsum("chkt,kt->chk", out[:, :, idx_w], w_w, optimize=True)
    return out


def interpolate_bicubic(g: Grid, scale: int) -> Grid:
    """Bicubic (Catmull-Rom, a=-0.5) upsampling by an integer factor.

    Edge handling is clamp-to-edge; scale 1 returns an exact copy.
    """
    if not isinstance(scale, int) or isinstance(scale, bool):
        raise ValueError("scale must be an integer")
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return g.copy()
    out = _upsample_separable(g.data, scale, ntaps=4)
    return Grid.from_array(out)


def _bilinear_upsample(arr: np.ndarray, factor: int) -> np.ndarray:
    return _upsample_separable(arr, factor, ntaps=2)


def encode(c: Codec, pixel: Grid) -> Grid:
    """Pixel -> latent. identity copies; boxpool takes factor x factor block means."""
    if c.kind == "identity":
        return pixel.copy()
    f = c.factor
    if pixel.height % f != 0 or pixel.width % f != 0:
        raise ValueError(
            f"boxpool encode needs dims divisible by {f}, got {pixel.height}x{pixel.width}"
        )
    a = pixel.astype64()
    ch, h, w = a.shape
    pooled = a.reshape(ch, h // f, f, w // f, f).mean(axis=(2, 4))
    return Grid.from_array(pooled)


def decode(c: Codec, latent: Grid) -> Grid:
    """Latent -> pixel. identity copies; boxpool upsamples bilinearly by factor."""
    if c.kind == "identity":
        return latent.copy()
    return Grid.from_array(_bilinear_upsample(latent.data, c.factor))
