"""Server loop behavior over real sockets."""

import socket
import struct
import threading
import time

import numpy as np
import pytest

from pxb_sidecar import wire
from pxb_sidecar.backends import GaussianBackend, ZeroBackend
from pxb_sidecar.server import SidecarConfig, serve


def start_server(**kw):
    ready = threading.Event()
    holder = {}

    def announce(banner):
        holder["port"] = int(banner.rsplit(":", 1)[1])
        ready.set()

    defaults = dict(backend=ZeroBackend(), model_name="mock-zero", announce=announce)
    defaults.update(kw)
    cfg = SidecarConfig(**defaults)
    threading.Thread(target=serve, args=(cfg,), daemon=True).start()
    assert ready.wait(5.0)
    return holder["port"]


def read_frame(sock):
    header = b""
    while len(header) < wire.HEADER.size:
        chunk = sock.recv(wire.HEADER.size - len(header))
        if not chunk:
            return None, None
        header += chunk
    ftype, length = wire.parse_header(header)
    payload = b""
    while len(payload) < length:
        chunk = sock.recv(length - len(payload))
        if not chunk:
            return None, None
        payload += chunk
    return ftype, payload


def hello(sock):
    sock.sendall(wire.encode_frame(wire.HELLO, b""))
    ftype, payload = read_frame(sock)
    assert ftype == wire.HELLO_ACK
    return wire.parse_hello_ack(payload)


def request(sock, latent, t=249, prompt="", guidance=0.0):
    req = wire.Request(*latent.shape, t, guidance, prompt, latent)
    sock.sendall(wire.encode_request(req))
    return read_frame(sock)


def test_hello_advertises_capabilities():
    port = start_server(
        accepted_timesteps=(999, 749, 499, 249), min_timestep=249, channels=4, patch_h=64, patch_w=64
    )
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        caps = hello(sock)
        assert caps.accepted_timesteps == (999, 749, 499, 249)
        assert caps.min_timestep == 249
        assert caps.channels == 4


def test_zero_request_yields_finite_zeros():
    port = start_server()
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        hello(sock)
        lat = np.random.default_rng(0).normal(size=(4, 8, 8)).astype(np.float32)
        ftype, payload = request(sock, lat, t=249)
        assert ftype == wire.DENOISE_RSP
        noise = wire.parse_response(payload)
        assert noise.shape == lat.shape
        assert np.all(noise == 0.0)


def test_gaussian_backend_deterministic_per_inputs():
    port = start_server(backend=GaussianBackend(), model_name="mock-gaussian")
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        hello(sock)
        lat = np.random.default_rng(1).normal(size=(2, 4, 4)).astype(np.float32)
        _, p1 = request(sock, lat, t=249, prompt="p")
        _, p2 = request(sock, lat, t=249, prompt="p")
        _, p3 = request(sock, lat, t=499, prompt="p")
        _, p4 = request(sock, lat, t=249, prompt="q")
        a, b, c, d = map(wire.parse_response, (p1, p2, p3, p4))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)
        assert abs(float(a.mean())) < 0.5  # standard normal-ish


def test_rejected_timestep_is_error_frame_and_connection_survives():
    port = start_server(accepted_timesteps=(999, 749, 499, 249), min_timestep=249)
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        hello(sock)
        lat = np.zeros((1, 2, 2), dtype=np.float32)
        ftype, payload = request(sock, lat, t=123)
        assert ftype == wire.ERROR
        code, msg = wire.parse_error(payload)
        assert code == 1 and "123" in msg
        ftype, _ = request(sock, lat, t=249)  # same connection still serves
        assert ftype == wire.DENOISE_RSP


def test_malformed_magic_closes_connection_process_alive():
    port = start_server()
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        sock.sendall(b"JUNK" + b"\x00" * 9)
        sock.settimeout(5)
        assert sock.recv(1) == b""  # server closed this connection
    # a fresh connection still works
    with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
        caps = hello(sock)
        assert caps.model_name == "mock-zero"


def test_concurrent_connections():
    port = start_server()
    results = []

    def worker(i):
        with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
            hello(sock)
            lat = np.full((1, 4, 4), float(i), dtype=np.float32)
            ftype, payload = request(sock, lat)
            results.append((i, ftype))

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(10)
    assert sorted(r[0] for r in results) == [0, 1, 2, 3]
    assert all(r[1] == wire.DENOISE_RSP for r in results)


def test_stdio_mode_round_trip():
    import subprocess
    import sys

    proc = subprocess.Popen(
        [sys.executable, "-m", "pxb_sidecar", "--mock", "zero", "--stdio"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
    )
    try:
        lat = np.ones((1, 2, 2), dtype=np.float32)
        req = wire.encode_request(wire.Request(1, 2, 2, 249, 0.0, "", lat))
        proc.stdin.write(wire.encode_frame(wire.HELLO, b"") + req)
        proc.stdin.flush()
        proc.stdin.close()
        out = proc.stdout.read()
        ftype, length = wire.parse_header(out[: wire.HEADER.size])
        assert ftype == wire.HELLO_ACK
        rest = out[wire.HEADER.size + length :]
        ftype2, length2 = wire.parse_header(rest[: wire.HEADER.size])
        assert ftype2 == wire.DENOISE_RSP
        noise = wire.parse_response(rest[wire.HEADER.size :])
        assert np.all(noise == 0.0)
    finally:
        proc.stdin.close() if not proc.stdin.closed else None
        proc.wait(10)
