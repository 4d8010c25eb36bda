"""PXB1 server loop: answer HELLO with capabilities, serve DENOISE requests.

One request in flight per connection; concurrency comes from multiple
connections, each on its own worker thread. Backend failures become ERROR
frames and the connection keeps serving; frame-format violations close the
connection but leave the process alive.
"""

from __future__ import annotations

import socket
import sys
import threading
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .backends import BackendError

ERR_BAD_TIMESTEP = 1
ERR_BACKEND = 2
ERR_BAD_REQUEST = 3


@dataclass
class SidecarConfig:
    backend: object
    model_name: str
    accepted_timesteps: tuple = ()
    min_timestep: int = 0
    channels: int = 0  # 0 = any
    patch_h: int = 0
    patch_w: int = 0
    host: str = "127.0.0.1"
    port: int = 0
    stdio: bool = False
    announce: object = field(default=None)  # callable(str) for the listen banner

    def capabilities(self) -> wire.Capabilities:
        return wire.Capabilities(
            model_name=self.model_name,
            accepted_timesteps=tuple(self.accepted_timesteps),
            min_timestep=self.min_timestep,
            channels=self.channels,
            patch_h=self.patch_h,
            patch_w=self.patch_w,
        )


def _read_exact(read, n: int):
    buf = b""
    while len(buf) < n:
        chunk = read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _check_request(req: wire.Request, cfg: SidecarConfig):
    if cfg.accepted_timesteps and req.timestep not in cfg.accepted_timesteps:
        return ERR_BAD_TIMESTEP, f"timestep {req.timestep} not in accepted set"
    if req.timestep < cfg.min_timestep:
        return ERR_BAD_TIMESTEP, f"timestep {req.timestep} below minimum {cfg.min_timestep}"
    if cfg.channels and req.channels != cfg.channels:
        return ERR_BAD_REQUEST, f"expected {cfg.channels} channels, got {req.channels}"
    if cfg.patch_h and (req.height, req.width) != (cfg.patch_h, cfg.patch_w):
        return ERR_BAD_REQUEST, f"expected {cfg.patch_h}x{cfg.patch_w} patches"
    return None


def serve_stream(read, write, cfg: SidecarConfig) -> None:
    """Run the frame loop over a byte stream until EOF or a framing error."""
    while True:
        header = _read_exact(read, wire.HEADER.size)
        if header is None:
            return
        ftype, length = wire.parse_header(header)  # FrameError propagates: close
        payload = _read_exact(read, length) if length else b""
        if payload is None and length:
            return
        if ftype == wire.HELLO:
            write(wire.encode_hello_ack(cfg.capabilities()))
        elif ftype == wire.DENOISE_REQ:
            try:
                req = wire.parse_request(payload)
            except wire.FrameError:
                raise  # malformed request body: drop the connection
            problem = _check_request(req, cfg)
            if problem is not None:
                write(wire.encode_error(*problem))
                continue
            try:
                noise = cfg.backend.predict(req.latent, req.timestep, req.prompt, req.guidance)
                noise = np.ascontiguousarray(noise, dtype=np.float32)
                if noise.shape != req.latent.shape or not np.isfinite(noise).all():
                    raise BackendError(f"backend produced invalid output {noise.shape}")
            except BackendError as e:
                write(wire.encode_error(ERR_BACKEND, str(e)))
                continue
            write(wire.encode_response(noise))
        else:
            # clients must not send server-only frames
            raise wire.FrameError(f"unexpected frame type {ftype} from client")


def _connection_worker(conn: socket.socket, cfg: SidecarConfig) -> None:
    try:
        with conn:
            serve_stream(conn.recv, conn.sendall, cfg)
    except (wire.FrameError, OSError):
        pass  # drop this connection, keep the process serving


def serve(cfg: SidecarConfig) -> None:
    """Serve until the process is interrupted (TCP) or stdin closes (stdio)."""
    if cfg.stdio:
        stdin = sys.stdin.buffer
        stdout = sys.stdout.buffer

        def write(b):
            stdout.write(b)
            stdout.flush()

        try:
            serve_stream(stdin.read1 if hasattr(stdin, "read1") else stdin.read, write, cfg)
        except wire.FrameError:
            pass
        return

    srv = socket.create_server((cfg.host, cfg.port))
    host, port = srv.getsockname()[:2]
    banner = f"listening on {host}:{port}"
    if cfg.announce is not None:
        cfg.announce(banner)
    else:
        print(banner, flush=True)
    try:
        while True:
            conn, _ = srv.accept()
            threading.Thread(target=_connection_worker, args=(conn, cfg), daemon=True).start()
    finally:
        srv.close()
