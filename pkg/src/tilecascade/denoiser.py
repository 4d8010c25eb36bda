"""Noise-predictor backends: zero, analytic Gaussian-mixture oracle, bridge.

The GMM backend is the exact posterior-mean denoiser for a Gaussian-mixture
prior under the forward marginal z_t ~ N(sqrt(ab)*z0, (1-ab)*I): with
isotropic components (mu_i, s_i^2, w_i) and v_i = ab*s_i^2 + (1-ab),

    r_i  proportional to  w_i * N(z; sqrt(ab)*mu_i, v_i*I)     (log-sum-exp)
    E[z0|z] = sum_i r_i * (sqrt(ab)*s_i^2*z + (1-ab)*mu_i) / v_i
    eps_hat = (z - sqrt(ab)*E[z0|z]) / sqrt(1-ab)

It ignores prompt and guidance: it exists to verify numerics, not semantics.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import wire
from .ddim import GuidanceContext
from .errors import (
    BridgeConnectionError,
    BridgeTimeoutError,
    MalformedFrameError,
    ProtocolError,
    RemoteFailureError,
)
from .grid import Grid
from .rng import FIXTURE_LEVEL, StreamKey, normal_field, uniform_field
from .schedule import Schedule

__all__ = [
    "Capabilities",
    "DenoiserHandle",
    "ZeroDenoiser",
    "GmmComponent",
    "GmmPrior",
    "GmmDenoiser",
    "BridgeDenoiser",
    "connect_bridge",
    "InstrumentedDenoiser",
    "make_smooth_prior",
    "sample_from_prior",
]


@dataclass(frozen=True)
class Capabilities:
    min_timestep: int = 0
    accepted_timesteps: tuple = ()  # empty means all timesteps
    channels: int = 0  # 0 means any
    patch_h: int = 0
    patch_w: int = 0
    concurrent_safe: bool = True


class DenoiserHandle:
    """Common predict() contract: validate timestep, delegate, check output."""

    capabilities: Capabilities = Capabilities()
    backend = "abstract"

    def predict(self, z: Grid, t: int, ctx: GuidanceContext) -> Grid:
        caps = self.capabilities
        if t < caps.min_timestep:
            raise ValueError(f"timestep {t} below backend minimum {caps.min_timestep}")
        if caps.accepted_timesteps and t not in caps.accepted_timesteps:
            raise ValueError(f"timestep {t} not in accepted set {caps.accepted_timesteps}")
        out = self._predict(z, t, ctx)
        if out.shape != z.shape:
            raise ValueError(f"backend returned shape {out.shape} for input {z.shape}")
        return out

    def _predict(self, z: Grid, t: int, ctx: GuidanceContext) -> Grid:
        raise NotImplementedError


class ZeroDenoiser(DenoiserHandle):
    backend = "zero"

    def _predict(self, z: Grid, t: int, ctx: GuidanceContext) -> Grid:
        return Grid.zeros(*z.shape)


@dataclass(frozen=True)
class GmmComponent:
    mean: np.ndarray  # (c, h, w) float64
    weight: float
    variance: float  # isotropic s^2

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("component weight must be positive")
        if self.variance <= 0:
            raise ValueError("component variance must be positive")


@dataclass(frozen=True)
class GmmPrior:
    components: tuple

    def __post_init__(self):
        if not self.components:
            raise ValueError("prior needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")
        shapes = {c.mean.shape for c in self.components}
        if len(shapes) != 1:
            raise ValueError("component means disagree on shape")

    @property
    def shape(self) -> tuple:
        return self.components[0].mean.shape


class GmmDenoiser(DenoiserHandle):
    backend = "gmm"

    def __init__(self, prior: GmmPrior, sched: Schedule):
        self.prior = prior
        self.sched = sched

    def _predict(self, z: Grid, t: int, ctx: GuidanceContext) -> Grid:
        if z.shape != self.prior.shape:
            raise ValueError(f"latent shape {z.shape} does not match prior {self.prior.shape}")
        ab = self.sched.alpha_bar_at(t)
        zf = z.astype64()
        dim = zf.size
        log_resp = np.empty(len(self.prior.components))
        post_means = []
        for i, comp in enumerate(self.prior.components):
            v = ab * comp.variance + (1.0 - ab)
            delta = zf - np.sqrt(ab) * comp.mean
            log_resp[i] = (
                np.log(comp.weight)
                - 0.5 * dim * np.log(2.0 * np.pi * v)
                - 0.5 * float(np.sum(delta * delta)) / v
            )
            post_means.append((np.sqrt(ab) * comp.variance * zf + (1.0 - ab) * comp.mean) / v)
        log_resp -= log_resp.max()
        resp = np.exp(log_resp)
        resp /= resp.sum()
        e_z0 = sum(r * m for r, m in zip(resp, post_means))
        eps = (zf - np.sqrt(ab) * e_z0) / np.sqrt(1.0 - ab)
        return Grid.from_array(eps)


def make_smooth_prior(
    channels: int,
    height: int,
    width: int,
    components: int = 3,
    variance: float = 1.0,
    smooth_sigma: float = 8.0,
    seed: int = 1234,
) -> GmmPrior:
    """Synthetic prior with smoothed-noise component means of unit RMS."""
    comps = []
    for i in range(components):
        raw = normal_field(StreamKey(seed, level=FIXTURE_LEVEL, patch=i), step=0, shape=(channels, height, width))
        mean = np.stack([gaussian_filter(raw[c], sigma=smooth_sigma, mode="nearest") for c in range(channels)])
        mean /= np.sqrt(np.mean(mean * mean)) + 1e-12
        comps.append(GmmComponent(mean=mean, weight=1.0 / components, variance=variance))
    return GmmPrior(components=tuple(comps))


def sample_from_prior(prior: GmmPrior, seed: int) -> Grid:
    """Deterministic draw z0 = mu_j + s*n with j picked by component weight."""
    key = StreamKey(seed, level=FIXTURE_LEVEL, patch=0)
    u = float(uniform_field(key, step=1, shape=(1,))[0])
    cumw = np.cumsum([c.weight for c in prior.components])
    j = min(int(np.searchsorted(cumw, u, side="right")), len(prior.components) - 1)
    comp = prior.components[j]
    noise = normal_field(key, step=2, shape=prior.shape)
    return Grid.from_array(comp.mean + np.sqrt(comp.variance) * noise)


def _sock_read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except socket.timeout as e:
            raise BridgeTimeoutError("timed out waiting for sidecar") from e
        except OSError as e:
            raise BridgeConnectionError(f"socket error: {e}") from e
        if not chunk:
            raise BridgeConnectionError("sidecar closed the connection")
        buf += chunk
    return buf


class BridgeDenoiser(DenoiserHandle):
    """Client side of the PXB1 protocol over a TCP stream.

    One request in flight per connection; calls are serialized behind a
    lock because remote backends do not declare concurrent-call safety.
    """

    backend = "bridge"

    def __init__(self, sock: socket.socket, ack: wire.HelloAck):
        self._sock = sock
        self._lock = threading.Lock()
        self.hello = ack
        self.capabilities = Capabilities(
            min_timestep=ack.min_timestep,
            accepted_timesteps=ack.accepted_timesteps,
            channels=ack.channels,
            patch_h=ack.patch_h,
            patch_w=ack.patch_w,
            concurrent_safe=False,
        )

    def _send(self, frame: bytes) -> None:
        try:
            self._sock.sendall(frame)
        except socket.timeout as e:
            raise BridgeTimeoutError("timed out sending to sidecar") from e
        except OSError as e:
            raise BridgeConnectionError(f"socket error: {e}") from e

    def _predict(self, z: Grid, t: int, ctx: GuidanceContext) -> Grid:
        req = wire.DenoiseRequest(
            channels=z.channels,
            height=z.height,
            width=z.width,
            timestep=t,
            guidance=ctx.guidance_scale,
            prompt=ctx.prompt,
            latent=z.data,
        )
        with self._lock:
            self._send(wire.encode_denoise_req(req))
            ftype, payload = wire.read_frame(lambda n: _sock_read_exact(self._sock, n))
        if ftype == wire.ERROR:
            raise RemoteFailureError(*wire.parse_error(payload))
        if ftype != wire.DENOISE_RSP:
            raise MalformedFrameError(f"expected DENOISE_RSP, got frame type {ftype}")
        noise = wire.parse_denoise_rsp(payload)
        if noise.shape != z.shape:
            raise ProtocolError(f"sidecar returned shape {noise.shape} for input {z.shape}")
        return Grid.from_array(noise)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def connect_bridge(address: str, timeout: float = 10.0) -> BridgeDenoiser:
    """Dial host:port, run the HELLO handshake, return the ready handle."""
    host, sep, port_s = address.rpartition(":")
    if not sep or not port_s.isdigit():
        raise BridgeConnectionError(f"bad bridge address {address!r}, want host:port")
    try:
        sock = socket.create_connection((host or "127.0.0.1", int(port_s)), timeout=timeout)
    except socket.timeout as e:
        raise BridgeTimeoutError(f"connect to {address} timed out") from e
    except OSError as e:
        raise BridgeConnectionError(f"cannot connect to {address}: {e}") from e
    sock.settimeout(timeout)
    try:
        sock.sendall(wire.encode_hello())
        ftype, payload = wire.read_frame(lambda n: _sock_read_exact(sock, n))
        if ftype == wire.ERROR:
            raise RemoteFailureError(*wire.parse_error(payload))
        if ftype != wire.HELLO_ACK:
            raise MalformedFrameError(f"expected HELLO_ACK, got frame type {ftype}")
        ack = wire.parse_hello_ack(payload)
    except (ProtocolError, OSError):
        sock.close()
        raise
    return BridgeDenoiser(sock, ack)


@dataclass
class CallCounter:
    total: int = 0
    by_timestep: dict = field(default_factory=dict)


class InstrumentedDenoiser(DenoiserHandle):
    """Counting wrapper used by NFE accounting tests."""

    def __init__(self, inner: DenoiserHandle):
        self.inner = inner
        self.counter = CallCounter()
        self.backend = f"counted-{inner.backend}"

    @property
    def capabilities(self) -> Capabilities:
        return self.inner.capabilities

    def _predict(self, z: Grid, t: int, ctx: GuidanceContext) -> Grid:
        self.counter.total += 1
        self.counter.by_timestep[t] = self.counter.by_timestep.get(t, 0) + 1
        return self.inner.predict(z, t, ctx)
