"""PXB1 denoiser sidecar: mock and real noise-prediction backends over a socket."""

from .backends import GaussianBackend, TurboModelBackend, ZeroBackend, make_backend
from .server import SidecarConfig, serve, serve_stream

__version__ = "0.1.0"
