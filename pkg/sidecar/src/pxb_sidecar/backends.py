"""Noise-prediction backends: model-free mocks plus an optional model wrapper.

Mock backends exist so the refinement engine's integration tests can drive
the full wire protocol without loading any model. Both are deterministic per
(latent, timestep, prompt).
"""

from __future__ import annotations

import hashlib
import threading

import numpy as np


class BackendError(Exception):
    """Prediction failed; mapped to an ERROR frame, connection stays up."""


class ZeroBackend:
    name = "mock-zero"

    def predict(self, latent: np.ndarray, timestep: int, prompt: str, guidance: float) -> np.ndarray:
        return np.zeros_like(latent)


class GaussianBackend:
    """Standard normal noise, deterministic per (latent, timestep, prompt)."""

    name = "mock-gaussian"

    def predict(self, latent: np.ndarray, timestep: int, prompt: str, guidance: float) -> np.ndarray:
        digest = hashlib.blake2b(digest_size=8)
        digest.update(timestep.to_bytes(4, "little"))
        digest.update(prompt.encode("utf-8"))
        digest.update(np.ascontiguousarray(latent, dtype="<f4").tobytes())
        rng = np.random.default_rng(int.from_bytes(digest.digest(), "little"))
        return rng.standard_normal(latent.shape).astype(np.float32)


class TurboModelBackend:
    """Wraps a few-step latent diffusion model (SDXL-Turbo class) for one
    noise-prediction forward pass per request.

    Requires the `model` extra (torch + diffusers). Latents on the wire are
    fed to the UNet as-is; the engine and the model must agree on latent
    scaling. Model access is serialized behind a lock.
    """

    def __init__(self, model_id: str = "stabilityai/sdxl-turbo", device: str = "cpu"):
        try:
            import torch
            from diffusers import StableDiffusionXLPipeline
        except ImportError as e:  # pragma: no cover - exercised only with the extra installed
            raise BackendError(
                "model backend needs the optional dependencies: pip install 'pxb-sidecar[model]'"
            ) from e
        self._torch = torch
        dtype = torch.float16 if device != "cpu" else torch.float32
        self.pipe = StableDiffusionXLPipeline.from_pretrained(model_id, torch_dtype=dtype)
        self.pipe.to(device)
        self.device = device
        self.name = model_id
        self._lock = threading.Lock()
        self._prompt_cache = {}

    @property
    def channels(self) -> int:
        return int(self.pipe.unet.config.in_channels)

    @property
    def patch_size(self) -> int:
        return int(self.pipe.unet.config.sample_size)

    def _embeds(self, prompt: str, need_negative: bool):
        key = (prompt, need_negative)
        if key not in self._prompt_cache:
            embeds, neg_embeds, pooled, neg_pooled = self.pipe.encode_prompt(
                prompt=prompt,
                device=self.device,
                num_images_per_prompt=1,
                do_classifier_free_guidance=need_negative,
            )
            self._prompt_cache[key] = (embeds, neg_embeds, pooled, neg_pooled)
        return self._prompt_cache[key]

    def predict(self, latent: np.ndarray, timestep: int, prompt: str, guidance: float) -> np.ndarray:
        torch = self._torch
        with self._lock, torch.no_grad():
            z = torch.from_numpy(np.ascontiguousarray(latent)).to(
                device=self.device, dtype=self.pipe.unet.dtype
            )[None]
            size = (z.shape[-2] * self.pipe.vae_scale_factor, z.shape[-1] * self.pipe.vae_scale_factor)
            use_cfg = guidance > 0
            embeds, neg_embeds, pooled, neg_pooled = self._embeds(prompt, use_cfg)
            add_time_ids = self.pipe._get_add_time_ids(
                size, (0, 0), size, dtype=z.dtype,
                text_encoder_projection_dim=self.pipe.text_encoder_2.config.projection_dim,
            ).to(self.device)
            t = torch.tensor([timestep], device=self.device)

            def unet_eps(hidden, pool):
                return self.pipe.unet(
                    z, t, encoder_hidden_states=hidden,
                    added_cond_kwargs={"text_embeds": pool, "time_ids": add_time_ids},
                ).sample

            try:
                eps = unet_eps(embeds, pooled)
                if use_cfg:
                    eps_uncond = unet_eps(neg_embeds, neg_pooled)
                    eps = eps_uncond + guidance * (eps - eps_uncond)
            except Exception as e:
                raise BackendError(f"model forward pass failed: {e}") from e
            return eps[0].float().cpu().numpy()


def make_backend(kind: str, model_id: str = None, device: str = "cpu"):
    if kind == "zero":
        return ZeroBackend()
    if kind == "gaussian":
        return GaussianBackend()
    if kind == "model":
        return TurboModelBackend(model_id or "stabilityai/sdxl-turbo", device)
    raise ValueError(f"unknown backend kind {kind!r}")
