"""Grid serialization: RGF1 raw grids plus 8-bit binary PGM/PPM previews.

RGF1 layout: magic "RGF1", three u32le (channels, height, width), then
channels*height*width f32le values, row-major. The round trip is bit-exact.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import GridIoError
from .grid import Grid

__all__ = [
    "write_rgf",
    "read_rgf",
    "write_pgm",
    "write_ppm",
    "read_pnm",
    "atomic_write_bytes",
]

_RGF_MAGIC = b"RGF1"
_MAX_DIM = 1 << 20  # sanity bound against corrupt headers


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via temp file + rename so readers never observe partial output."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rgf_bytes(g: Grid) -> bytes:
    header = _RGF_MAGIC + struct.pack("<III", g.channels, g.height, g.width)
    return header + g.data.astype("<f4").tobytes(order="C")


def write_rgf(path: str, g: Grid) -> None:
    atomic_write_bytes(path, rgf_bytes(g))


def read_rgf(path: str) -> Grid:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise GridIoError(f"cannot read {path}: {e}") from e
    return parse_rgf(blob, origin=path)


def parse_rgf(blob: bytes, origin: str = "<bytes>") -> Grid:
    if len(blob) < 16:
        raise GridIoError(f"{origin}: truncated RGF1 header")
    if blob[:4] != _RGF_MAGIC:
        raise GridIoError(f"{origin}: bad magic {blob[:4]!r}")
    c, h, w = struct.unpack("<III", blob[4:16])
    if not (0 < c <= _MAX_DIM and 0 < h <= _MAX_DIM and 0 < w <= _MAX_DIM):
        raise GridIoError(f"{origin}: implausible dims {c}x{h}x{w}")
    need = 16 + 4 * c * h * w
    if len(blob) != need:
        raise GridIoError(f"{origin}: payload length {len(blob)} != expected {need}")
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(c, h, w)
    return Grid.from_array(data)


def _quantize(plane: np.ndarray) -> np.ndarray:
    q = np.rint(np.clip(plane, 0.0, 1.0) * 255.0)
    return q.astype(np.uint8)


def write_pgm(path: str, g: Grid) -> None:
    """Single-channel grid to binary PGM; values mapped from [0,1], clamped."""
    if g.channels != 1:
        raise GridIoError(f"PGM needs 1 channel, got {g.channels}")
    header = f"P5\n{g.width} {g.height}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + _quantize(g.data[0]).tobytes())


def write_ppm(path: str, g: Grid) -> None:
    """Three-channel grid to binary PPM; values mapped from [0,1], clamped."""
    if g.channels != 3:
        raise GridIoError(f"PPM needs 3 channels, got {g.channels}")
    header = f"P6\n{g.width} {g.height}\n255\n".encode("ascii")
    interleaved = np.ascontiguousarray(np.moveaxis(_quantize(g.data), 0, -1))
    atomic_write_bytes(path, header + interleaved.tobytes())


def _read_pnm_header(blob: bytes, origin: str) -> tuple:
    # Tokens may be separated by arbitrary whitespace; comments start with '#'.
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(blob):
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j : j + 1].isspace():
                j += 1
            tokens.append(blob[i:j])
            i = j
    if len(tokens) < 4:
        raise GridIoError(f"{origin}: truncated PNM header")
    return tokens, i + 1  # data starts after the single whitespace ending maxval


def read_pnm(path: str) -> Grid:
    """Read binary PGM (P5) or PPM (P6); values mapped back into [0,1]."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise GridIoError(f"cannot read {path}: {e}") from e
    tokens, start = _read_pnm_header(blob, path)
    magic, w_s, h_s, maxval_s = tokens
    if magic not in (b"P5", b"P6"):
        raise GridIoError(f"{path}: unsupported PNM magic {magic!r}")
    w, h, maxval = int(w_s), int(h_s), int(maxval_s)
    if maxval != 255:
        raise GridIoError(f"{path}: only maxval 255 supported, got {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    raw = blob[start : start + need]
    if len(raw) != need:
        raise GridIoError(f"{path}: expected {need} pixel bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float32) / 255.0
    if channels == 1:
        return Grid.from_array(arr.reshape(1, h, w))
    return Grid.from_array(np.moveaxis(arr.reshape(h, w, 3), -1, 0))
