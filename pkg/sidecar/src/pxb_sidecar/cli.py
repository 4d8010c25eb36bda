"""Sidecar entry point.

Examples:
    pxb-sidecar --mock zero --listen 127.0.0.1:0
    pxb-sidecar --mock gaussian --timesteps 999,749,499,249 --min-timestep 249
    pxb-sidecar --model stabilityai/sdxl-turbo --device cuda
"""

from __future__ import annotations

import argparse
import sys

from .backends import BackendError, make_backend
from .server import SidecarConfig, serve


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pxb-sidecar", description=__doc__)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--mock", choices=["zero", "gaussian"], help="serve without any model")
    mode.add_argument("--model", help="diffusers model id to wrap (needs the 'model' extra)")
    p.add_argument("--device", default="cpu", help="device for the model backend")
    p.add_argument("--listen", default="127.0.0.1:0", help="host:port to bind (port 0 = ephemeral)")
    p.add_argument("--stdio", action="store_true", help="speak the protocol over stdin/stdout")
    p.add_argument("--timesteps", default="", help="comma-separated accepted timesteps (empty = all)")
    p.add_argument("--min-timestep", type=int, default=0)
    p.add_argument("--channels", type=int, default=0, help="advertised latent channels (0 = any)")
    p.add_argument("--patch", type=int, default=0, help="advertised square patch size (0 = any)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.model:
            backend = make_backend("model", model_id=args.model, device=args.device)
        else:
            backend = make_backend(args.mock or "zero")
    except (BackendError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    timesteps = tuple(int(x) for x in args.timesteps.split(",") if x.strip())
    channels = args.channels
    patch = args.patch
    if args.model:  # advertise what the wrapped model actually accepts
        channels = channels or backend.channels
        patch = patch or backend.patch_size
    host, _, port_s = args.listen.rpartition(":")
    cfg = SidecarConfig(
        backend=backend,
        model_name=getattr(backend, "name", "unknown"),
        accepted_timesteps=timesteps,
        min_timestep=args.min_timestep,
        channels=channels,
        patch_h=patch,
        patch_w=patch,
        host=host or "127.0.0.1",
        port=int(port_s or 0),
        stdio=args.stdio,
    )
    try:
        serve(cfg)
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
