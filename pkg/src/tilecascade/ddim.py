"""Deterministic DDIM stepping, partial inversion, and slerp noise injection.

Update rules (abar = alpha_bar, eps = predicted noise):

    reverse  t -> t_prev:  z' = sqrt(abar_prev) * (z - sqrt(1-abar_t)*eps) / sqrt(abar_t)
                              + sqrt(1-abar_prev) * eps
    invert   t_prev -> t:  z' = sqrt(abar_t) * (z - sqrt(1-abar_prev)*eps) / sqrt(abar_prev)
                              + sqrt(1-abar_t) * eps

For a frozen eps field the two maps are exact algebraic inverses. All math
runs in float64 and is cast back to float32 at the Grid boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid
from .rng import StreamKey, normal_field
from .schedule import Schedule, StepGrid

__all__ = [
    "GuidanceContext",
    "InjectionConfig",
    "ddim_reverse_step",
    "ddim_inversion_step",
    "partial_invert",
    "inject_noise",
    "refine_latent",
    "slerp",
]


@dataclass(frozen=True)
class GuidanceContext:
    """Prompt and guidance scale, carried through to the denoiser backend."""

    prompt: str = ""
    guidance_scale: float = 0.0

    def __post_init__(self):
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be >= 0")


@dataclass(frozen=True)
class InjectionConfig:
    """Slerp mixing weight toward fresh noise plus the stream identity.

    lam weights the random endpoint: lam=0 keeps the prediction untouched,
    lam near 1 replaces it almost entirely.
    """

    lam: float
    stream: StreamKey

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lambda must lie in [0, 1), got {self.lam}")


def _check_pair(a: Grid, b: Grid) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _check_order(t: int, t_prev: int, sched: Schedule) -> None:
    if not (t > t_prev >= -1):
        raise ValueError(f"need t > t_prev >= -1, got t={t}, t_prev={t_prev}")
    if not 0 <= t < sched.t_total:
        raise ValueError(f"t={t} outside [0, {sched.t_total})")


def ddim_reverse_step(z_t: Grid, eps_hat: Grid, t: int, t_prev: int, sched: Schedule) -> Grid:
    """One deterministic reverse step t -> t_prev (t_prev = -1 lands on the clean latent)."""
    _check_pair(z_t, eps_hat)
    _check_order(t, t_prev, sched)
    ab_t = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t_prev)
    z = z_t.astype64()
    e = eps_hat.astype64()
    x0 = (z - np.sqrt(1.0 - ab_t) * e) / np.sqrt(ab_t)
    out = np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * e
    return Grid.from_array(out)


def ddim_inversion_step(z_prev: Grid, eps_hat: Grid, t_prev: int, t: int, sched: Schedule) -> Grid:
    """One deterministic inversion step t_prev -> t (the reverse map run backwards)."""
    _check_pair(z_prev, eps_hat)
    _check_order(t, t_prev, sched)
    ab_t = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t_prev)
    z = z_prev.astype64()
    e = eps_hat.astype64()
    x0 = (z - np.sqrt(1.0 - ab_prev) * e) / np.sqrt(ab_prev)
    out = np.sqrt(ab_t) * x0 + np.sqrt(1.0 - ab_t) * e
    return Grid.from_array(out)


def partial_invert(z0: Grid, den, ctx: GuidanceContext, grid: StepGrid, sched: Schedule) -> Grid:
    """Chain inversion steps from the clean latent up to depth K = grid.k.

    The noise prediction for each jump is evaluated at the jump's source
    latent and source timestep, clamped to the smallest timestep the backend
    accepts (the initial jump leaves t = 0, which few-step backends reject).
    """
    if grid.steps == 0:
        raise ValueError("empty step grid")
    min_t = den.capabilities.min_timestep
    ascending = [-1] + list(reversed(grid.timesteps))
    z = z0
    for t_src, t_dst in zip(ascending[:-1], ascending[1:]):
        query_t = max(t_src, 0, min_t)
        eps = den.predict(z, query_t, ctx)
        z = ddim_inversion_step(z, eps, t_src, t_dst, sched)
    return z


def slerp(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Spherical interpolation over the flattened vectors; lam weights b.

    Falls back to lerp when the angle is below 1e-4 rad or either norm is
    degenerate.
    """
    af = a.reshape(-1)
    bf = b.reshape(-1)
    na = np.linalg.norm(af)
    nb = np.linalg.norm(bf)
    if na < 1e-12 or nb < 1e-12:
        return ((1.0 - lam) * a + lam * b).copy()
    cos_om = float(np.dot(af, bf) / (na * nb))
    omega = np.arccos(np.clip(cos_om, -1.0, 1.0))
    if omega < 1e-4:
        return ((1.0 - lam) * a + lam * b).copy()
    s = np.sin(omega)
    return (np.sin((1.0 - lam) * omega) / s) * a + (np.sin(lam * omega) / s) * b


def inject_noise(eps_hat: Grid, cfg: InjectionConfig, step: int = 0) -> Grid:
    """Mix the prediction with keyed Gaussian noise along the great circle."""
    if cfg.lam == 0.0:
        return eps_hat.copy()
    rand = normal_field(cfg.stream, step, eps_hat.shape)
    mixed = slerp(eps_hat.astype64(), rand, cfg.lam)
    return Grid.from_array(mixed)


def refine_latent(
    z0_coarse: Grid,
    den,
    ctx: GuidanceContext,
    grid: StepGrid,
    sched: Schedule,
    inj: InjectionConfig,
) -> Grid:
    """Invert a coarse latent to depth K, then denoise it back along the grid.

    Noise injection is applied after each prediction and before the update;
    reverse step j draws from the (seed, level, patch, j) stream.
    """
    z = partial_invert(z0_coarse, den, ctx, grid, sched)
    ts = list(grid.timesteps)
    for j, t in enumerate(ts):
        t_prev = ts[j + 1] if j + 1 < len(ts) else -1
        eps = den.predict(z, t, ctx)
        eps = inject_noise(eps, inj, step=j)
        z = ddim_reverse_step(z, eps, t, t_prev, sched)
    return z


def injection_at(base: InjectionConfig, patch: int) -> InjectionConfig:
    """Per-patch stream derivation used by the tiled orchestrator."""
    return replace(base, stream=base.stream.with_patch(patch))
