"""PXB1 framing for the sidecar side.

Frame: magic "PXB1", type u8, payload length u64le, payload. Integers are
little-endian, latents are f32le row-major. One request in flight per
connection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"PXB1"
HEADER = struct.Struct("<4sBQ")

HELLO = 1
HELLO_ACK = 2
DENOISE_REQ = 3
DENOISE_RSP = 4
ERROR = 5

FRAME_TYPES = (HELLO, HELLO_ACK, DENOISE_REQ, DENOISE_RSP, ERROR)
MAX_PAYLOAD = 1 << 32


class FrameError(Exception):
    """Bytes on the wire violate the frame format."""


@dataclass(frozen=True)
class Capabilities:
    model_name: str
    accepted_timesteps: tuple  # empty = all
    min_timestep: int
    channels: int
    patch_h: int
    patch_w: int


@dataclass(frozen=True)
class Request:
    channels: int
    height: int
    width: int
    timestep: int
    guidance: float
    prompt: str
    latent: np.ndarray


def encode_frame(ftype: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, ftype, len(payload)) + payload


def parse_header(header: bytes) -> tuple:
    magic, ftype, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if ftype not in FRAME_TYPES:
        raise FrameError(f"unknown frame type {ftype}")
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload length {length} too large")
    return ftype, length


def encode_hello_ack(caps: Capabilities) -> bytes:
    name = caps.model_name.encode("utf-8")
    payload = struct.pack("<I", len(name)) + name
    payload += struct.pack("<I", len(caps.accepted_timesteps))
    if caps.accepted_timesteps:
        payload += struct.pack(f"<{len(caps.accepted_timesteps)}I", *caps.accepted_timesteps)
    payload += struct.pack("<IIII", caps.min_timestep, caps.channels, caps.patch_h, caps.patch_w)
    return encode_frame(HELLO_ACK, payload)


def parse_hello_ack(payload: bytes) -> Capabilities:
    (n_name,) = struct.unpack_from("<I", payload, 0)
    off = 4
    name = payload[off : off + n_name].decode("utf-8")
    off += n_name
    (n_ts,) = struct.unpack_from("<I", payload, off)
    off += 4
    ts = struct.unpack_from(f"<{n_ts}I", payload, off)
    off += 4 * n_ts
    min_t, ch, ph, pw = struct.unpack_from("<IIII", payload, off)
    if off + 16 != len(payload):
        raise FrameError("trailing bytes in HELLO_ACK")
    return Capabilities(name, tuple(ts), min_t, ch, ph, pw)


def parse_request(payload: bytes) -> Request:
    if len(payload) < 20:
        raise FrameError("truncated DENOISE_REQ")
    c, h, w, t, guidance = struct.unpack_from("<IIIIf", payload, 0)
    (n_prompt,) = struct.unpack_from("<I", payload, 20)
    off = 24
    if off + n_prompt > len(payload):
        raise FrameError("truncated prompt")
    prompt = payload[off : off + n_prompt].decode("utf-8")
    off += n_prompt
    need = off + 4 * c * h * w
    if len(payload) != need:
        raise FrameError(f"DENOISE_REQ length {len(payload)} != {need}")
    latent = np.frombuffer(payload, dtype="<f4", offset=off).reshape(c, h, w)
    return Request(c, h, w, t, guidance, prompt, latent)


def encode_request(req: Request) -> bytes:
    lat = np.ascontiguousarray(req.latent, dtype="<f4")
    prompt = req.prompt.encode("utf-8")
    payload = struct.pack("<IIIIf", req.channels, req.height, req.width, req.timestep, req.guidance)
    payload += struct.pack("<I", len(prompt)) + prompt + lat.tobytes(order="C")
    return encode_frame(DENOISE_REQ, payload)


def encode_response(noise: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(noise, dtype="<f4")
    c, h, w = arr.shape
    return encode_frame(DENOISE_RSP, struct.pack("<III", c, h, w) + arr.tobytes(order="C"))


def parse_response(payload: bytes) -> np.ndarray:
    c, h, w = struct.unpack_from("<III", payload, 0)
    if len(payload) != 12 + 4 * c * h * w:
        raise FrameError("DENOISE_RSP length mismatch")
    return np.frombuffer(payload, dtype="<f4", offset=12).reshape(c, h, w).copy()


def encode_error(code: int, message: str) -> bytes:
    return encode_frame(ERROR, struct.pack("<I", code) + message.encode("utf-8"))


def parse_error(payload: bytes) -> tuple:
    (code,) = struct.unpack_from("<I", payload, 0)
    return code, payload[4:].decode("utf-8", errors="replace")
