"""Tiled few-step diffusion refinement with pixel-space cascade upsampling."""

from .blend import BlendMaskSet, blend, build_masks, one_hot_stitch
from .cascade import CascadeConfig, LevelSetting, RunManifest, cascade_step, run_cascade, up
from .ddim import (
    GuidanceContext,
    InjectionConfig,
    ddim_inversion_step,
    ddim_reverse_step,
    inject_noise,
    partial_invert,
    refine_latent,
    slerp,
)
from .denoiser import (
    BridgeDenoiser,
    Capabilities,
    DenoiserHandle,
    GmmComponent,
    GmmDenoiser,
    GmmPrior,
    InstrumentedDenoiser,
    ZeroDenoiser,
    connect_bridge,
    make_smooth_prior,
    sample_from_prior,
)
from .grid import Codec, Grid, decode, encode, interpolate_bicubic
from .metrics import SpectrumBands, band_correlation, psnr, radial_band_energy, seam_energy
from .rng import StreamKey, normal_field
from .schedule import Schedule, StepGrid, build_schedule, equispaced_grid, truncate_grid
from .tiler import TileLayout, build_layout, extract, patch_count

__version__ = "0.1.0"
