"""PXB1 wire protocol: framing and payload codecs for the denoiser bridge.

Frame layout: magic "PXB1" (4 bytes), type (u8), payload length (u64le),
payload. One request is in flight per connection. All integers are
little-endian; latents travel as f32le row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MalformedFrameError

__all__ = [
    "MAGIC",
    "HELLO",
    "HELLO_ACK",
    "DENOISE_REQ",
    "DENOISE_RSP",
    "ERROR",
    "HelloAck",
    "DenoiseRequest",
    "encode_frame",
    "decode_frame_header",
    "read_frame",
    "encode_hello",
    "encode_hello_ack",
    "parse_hello_ack",
    "encode_denoise_req",
    "parse_denoise_req",
    "encode_denoise_rsp",
    "parse_denoise_rsp",
    "encode_error",
    "parse_error",
]

MAGIC = b"PXB1"
HEADER = struct.Struct("<4sBQ")

HELLO = 1
HELLO_ACK = 2
DENOISE_REQ = 3
DENOISE_RSP = 4
ERROR = 5

_FRAME_TYPES = (HELLO, HELLO_ACK, DENOISE_REQ, DENOISE_RSP, ERROR)
_MAX_PAYLOAD = 1 << 32  # plenty for desk-scale latents, guards header corruption


@dataclass(frozen=True)
class HelloAck:
    model_name: str
    accepted_timesteps: tuple  # empty means every timestep is accepted
    min_timestep: int
    channels: int
    patch_h: int
    patch_w: int


@dataclass(frozen=True)
class DenoiseRequest:
    channels: int
    height: int
    width: int
    timestep: int
    guidance: float
    prompt: str
    latent: np.ndarray  # (c, h, w) float32


def encode_frame(ftype: int, payload: bytes) -> bytes:
    if ftype not in _FRAME_TYPES:
        raise ValueError(f"unknown frame type {ftype}")
    return HEADER.pack(MAGIC, ftype, len(payload)) + payload


def decode_frame_header(header: bytes) -> tuple:
    magic, ftype, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise MalformedFrameError(f"bad magic {magic!r}")
    if ftype not in _FRAME_TYPES:
        raise MalformedFrameError(f"unknown frame type {ftype}")
    if length > _MAX_PAYLOAD:
        raise MalformedFrameError(f"payload length {length} exceeds limit")
    return ftype, length


def read_frame(read_exact) -> tuple:
    """Pull one frame through a read_exact(n) callable; returns (type, payload)."""
    ftype, length = decode_frame_header(read_exact(HEADER.size))
    payload = read_exact(length) if length else b""
    return ftype, payload


def encode_hello() -> bytes:
    return encode_frame(HELLO, b"")


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _unpack_str(buf: bytes, off: int) -> tuple:
    if off + 4 > len(buf):
        raise MalformedFrameError("truncated string length")
    (n,) = struct.unpack_from("<I", buf, off)
    off += 4
    if off + n > len(buf):
        raise MalformedFrameError("truncated string bytes")
    return buf[off : off + n].decode("utf-8"), off + n


def encode_hello_ack(ack: HelloAck) -> bytes:
    payload = _pack_str(ack.model_name)
    payload += struct.pack("<I", len(ack.accepted_timesteps))
    payload += struct.pack(f"<{len(ack.accepted_timesteps)}I", *ack.accepted_timesteps)
    payload += struct.pack(
        "<IIII", ack.min_timestep, ack.channels, ack.patch_h, ack.patch_w
    )
    return encode_frame(HELLO_ACK, payload)


def parse_hello_ack(payload: bytes) -> HelloAck:
    name, off = _unpack_str(payload, 0)
    if off + 4 > len(payload):
        raise MalformedFrameError("truncated timestep count")
    (n_ts,) = struct.unpack_from("<I", payload, off)
    off += 4
    if off + 4 * n_ts + 16 > len(payload):
        raise MalformedFrameError("truncated HELLO_ACK payload")
    ts = struct.unpack_from(f"<{n_ts}I", payload, off)
    off += 4 * n_ts
    min_t, ch, ph, pw = struct.unpack_from("<IIII", payload, off)
    if off + 16 != len(payload):
        raise MalformedFrameError("trailing bytes in HELLO_ACK")
    return HelloAck(name, tuple(ts), min_t, ch, ph, pw)


def encode_denoise_req(req: DenoiseRequest) -> bytes:
    lat = np.ascontiguousarray(req.latent, dtype="<f4")
    if lat.shape != (req.channels, req.height, req.width):
        raise ValueError("latent shape does not match declared dims")
    payload = struct.pack("<IIIIf", req.channels, req.height, req.width, req.timestep, req.guidance)
    payload += _pack_str(req.prompt)
    payload += lat.tobytes(order="C")
    return encode_frame(DENOISE_REQ, payload)


def parse_denoise_req(payload: bytes) -> DenoiseRequest:
    if len(payload) < 20:
        raise MalformedFrameError("truncated DENOISE_REQ header")
    c, h, w, t, guidance = struct.unpack_from("<IIIIf", payload, 0)
    prompt, off = _unpack_str(payload, 20)
    need = off + 4 * c * h * w
    if len(payload) != need:
        raise MalformedFrameError(f"DENOISE_REQ payload length {len(payload)} != {need}")
    lat = np.frombuffer(payload, dtype="<f4", offset=off).reshape(c, h, w)
    return DenoiseRequest(c, h, w, t, guidance, prompt, lat)


def encode_denoise_rsp(noise: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(noise, dtype="<f4")
    c, h, w = arr.shape
    return encode_frame(DENOISE_RSP, struct.pack("<III", c, h, w) + arr.tobytes(order="C"))


def parse_denoise_rsp(payload: bytes) -> np.ndarray:
    if len(payload) < 12:
        raise MalformedFrameError("truncated DENOISE_RSP header")
    c, h, w = struct.unpack_from("<III", payload, 0)
    need = 12 + 4 * c * h * w
    if len(payload) != need:
        raise MalformedFrameError(f"DENOISE_RSP payload length {len(payload)} != {need}")
    return np.frombuffer(payload, dtype="<f4", offset=12).reshape(c, h, w).copy()


def encode_error(code: int, message: str) -> bytes:
    return encode_frame(ERROR, struct.pack("<I", code) + message.encode("utf-8"))


def parse_error(payload: bytes) -> tuple:
    if len(payload) < 4:
        raise MalformedFrameError("truncated ERROR payload")
    (code,) = struct.unpack_from("<I", payload, 0)
    return code, payload[4:].decode("utf-8", errors="replace")
