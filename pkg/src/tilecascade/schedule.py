"""Noise schedule tables and few-step timestep grids.

The signal-retention table alpha_bar[t] = prod_{s<=t} (1 - beta_s) drives
every deterministic sampling step. alpha_bar at the virtual destination
t = -1 is defined as exactly 1 so the final reverse step lands on the clean
latent estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Schedule", "StepGrid", "build_schedule", "equispaced_grid", "truncate_grid"]

DEFAULT_T = 1000
DEFAULT_BETA_START = 0.00085
DEFAULT_BETA_END = 0.012
DEFAULT_KIND = "scaled_linear"


@dataclass(frozen=True)
class Schedule:
    kind: str
    t_total: int
    beta_start: float
    beta_end: float
    alpha_bar: np.ndarray  # float64, strictly decreasing, in (0, 1)

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar lookup with the t = -1 convention (exactly 1)."""
        if t == -1:
            return 1.0
        if not 0 <= t < self.t_total:
            raise ValueError(f"timestep {t} outside [0, {self.t_total})")
        return float(self.alpha_bar[t])


@dataclass(frozen=True)
class StepGrid:
    """Descending few-step timestep grid plus the inversion depth K.

    For a freshly built grid K defaults to the last (smallest) timestep,
    the depth used when refining with a single reverse step.
    """

    timesteps: tuple
    k: int

    def __post_init__(self):
        ts = self.timesteps
        if len(ts) == 0:
            raise ValueError("empty timestep grid")
        if any(ts[i] <= ts[i + 1] for i in range(len(ts) - 1)):
            raise ValueError(f"timesteps must be strictly descending: {ts}")
        if ts[-1] < 0:
            raise ValueError(f"negative timestep in grid: {ts}")
        if self.k not in ts:
            raise ValueError(f"K={self.k} not on the grid {ts}")

    @property
    def steps(self) -> int:
        return len(self.timesteps)


def build_schedule(
    kind: str = DEFAULT_KIND,
    t_total: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> Schedule:
    """Construct the per-step variance table and its cumulative products.

    linear: beta_t evenly spaced on [beta_start, beta_end].
    scaled_linear: sqrt(beta_t) evenly spaced on [sqrt(beta_start), sqrt(beta_end)].
    """
    if t_total < 1:
        raise ValueError("t_total must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, t_total, dtype=np.float64)
    elif kind == "scaled_linear":
        betas = np.linspace(beta_start**0.5, beta_end**0.5, t_total, dtype=np.float64) ** 2
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    alpha_bar = np.cumprod(1.0 - betas)
    alpha_bar.setflags(write=False)
    return Schedule(kind, t_total, beta_start, beta_end, alpha_bar)


def equispaced_grid(sched: Schedule, s: int) -> StepGrid:
    """S equally distributed timesteps, descending; e.g. T=1000, S=4 -> 999,749,499,249."""
    t_total = sched.t_total
    if not 1 <= s <= t_total:
        raise ValueError(f"step count {s} outside [1, {t_total}]")
    ts = tuple(((s - j) * t_total) // s - 1 for j in range(s))
    return StepGrid(timesteps=ts, k=ts[-1])


def truncate_grid(grid: StepGrid, k: int) -> StepGrid:
    """Keep the suffix of timesteps <= K; drives the reverse pass from K to 0."""
    if k not in grid.timesteps:
        raise ValueError(f"K={k} is not on the grid {grid.timesteps}")
    suffix = tuple(t for t in grid.timesteps if t <= k)
    return StepGrid(timesteps=suffix, k=k)
