"""Diffusion algebra, losses and the deterministic sampler.

forward_diffuse / reconstruct_x0 are dtype-generic (numpy or torch) exact
affine formulas. Sampling is ancestral-free DDIM: deterministic given
(weights, prompt, seed, config).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch

from ..errors import ContractError
from ..uvtools import TextureMap
from .schedule import NoiseSchedule
from .textenc import MAX_TOKENS
from .unet import Denoiser

DEFAULT_GUIDANCE = 7.5
DEFAULT_SAMPLE_STEPS = 50


class IdentityCodec:
    """Pixel-space stand-in for a learned latent codec.

    encode maps [0, 1] texture pixels to [-1, 1] latents; decode is the
    exact inverse followed by clamping, differentiable in torch.
    """

    latent_channels = 3

    def encode(self, pixels) -> torch.Tensor:
        arr = np.asarray(getattr(pixels, "pixels", pixels), dtype=np.float64)
        latent = torch.from_numpy(arr * 2.0 - 1.0).permute(2, 0, 1)
        return latent.to(torch.float32)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        """(..., 3, H, W) latent -> (..., 3, H, W) image in [0, 1]."""
        return torch.clamp((latent + 1.0) * 0.5, 0.0, 1.0)


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule):
    """x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps."""
    if getattr(eps, "shape", None) != getattr(x0, "shape", None):
        raise ContractError("eps must have the same shape as x0")
    a, b = schedule.coefs(t)
    return a * x0 + b * eps


def reconstruct_x0(x_t, eps_hat, t: int, schedule: NoiseSchedule):
    """Exact inversion: x0_hat = (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)."""
    a, b = schedule.coefs(t)
    return (x_t - b * eps_hat) / a


def _token_batch(denoiser: Denoiser, y, batch: int, device) -> torch.Tensor:
    length = denoiser.config.max_tokens
    if y is None:
        ids = denoiser.vocab.null_sequence(length)
        return torch.tensor([ids] * batch, dtype=torch.long, device=device)
    if isinstance(y, str):
        ids = denoiser.vocab.encode(y, length)
        return torch.tensor([ids] * batch, dtype=torch.long, device=device)
    y = torch.as_tensor(y, dtype=torch.long, device=device)
    if y.ndim == 1:
        y = y[None].expand(batch, -1)
    return y


def predict_noise(denoiser: Denoiser, adapters, x_t: torch.Tensor, y, t,
                  style_adapters=None, style_weight: float = 0.0) -> torch.Tensor:
    """Adapter-aware noise prediction.

    y may be a prompt string, a token id tensor, or None for the reserved
    null (unconditional) embedding. t is a 1-based int or (B,) tensor.
    """
    if x_t.ndim == 3:
        x_t = x_t[None]
    denoiser.install_adapters(adapters, style_adapters, style_weight)
    tokens = _token_batch(denoiser, y, x_t.shape[0], x_t.device)
    if np.isscalar(t) or (torch.is_tensor(t) and t.ndim == 0):
        t = torch.full((x_t.shape[0],), int(t), dtype=torch.long, device=x_t.device)
    else:
        t = torch.as_tensor(t, dtype=torch.long, device=x_t.device)
    return denoiser(x_t, tokens, t)


def cfg_noise(denoiser: Denoiser, adapters, x_t: torch.Tensor, y, t,
              omega: float = DEFAULT_GUIDANCE, style_adapters=None,
              style_weight: float = 0.0) -> torch.Tensor:
    """Classifier-free guidance: (1 + w) eps(x, y) - w eps(x, null).

    Computed as cond + w * (cond - uncond) so omega = 0 and
    cond == uncond are exact identities.
    """
    cond = predict_noise(denoiser, adapters, x_t, y, t, style_adapters, style_weight)
    if omega == 0.0:
        return cond
    uncond = predict_noise(denoiser, adapters, x_t, None, t, style_adapters, style_weight)
    return cond + omega * (cond - uncond)


class DiffusionLossResult(NamedTuple):
    loss: torch.Tensor
    t: torch.Tensor
    eps: torch.Tensor
    x_t: torch.Tensor
    eps_hat: torch.Tensor


def diffusion_loss(denoiser: Denoiser, adapters, x0: torch.Tensor, y,
                   schedule: NoiseSchedule,
                   generator: torch.Generator | None = None,
                   t: torch.Tensor | None = None,
                   eps: torch.Tensor | None = None) -> DiffusionLossResult:
    """Mean squared noise-prediction error over a batch.

    Draws t ~ uniform integers [1, T] and eps ~ N(0, I) from `generator`
    unless given. With a frozen base, backward() populates gradients on
    adapter parameters only. The intermediates are returned so downstream
    objectives (adversarial enhancement) can reuse the same forward pass.
    """
    if x0.ndim != 4 or x0.shape[0] < 1:
        raise ContractError("batch must be a nonempty (B, C, H, W) tensor")
    b = x0.shape[0]
    if t is None:
        t = torch.randint(1, schedule.timesteps + 1, (b,), generator=generator)
    if eps is None:
        eps = torch.empty_like(x0).normal_(generator=generator)
    ab = torch.as_tensor(schedule.alpha_bar, dtype=x0.dtype)[t - 1]
    sa = torch.sqrt(ab)[:, None, None, None]
    sb = torch.sqrt(1.0 - ab)[:, None, None, None]
    x_t = sa * x0 + sb * eps
    eps_hat = predict_noise(denoiser, adapters, x_t, y, t)
    loss = torch.mean((eps - eps_hat) ** 2)
    return DiffusionLossResult(loss, t, eps, x_t, eps_hat)


def reconstruct_x0_batch(x_t: torch.Tensor, eps_hat: torch.Tensor,
                         t: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """reconstruct_x0 with a per-sample timestep vector."""
    ab = torch.as_tensor(schedule.alpha_bar, dtype=x_t.dtype)[t - 1]
    sa = torch.sqrt(ab)[:, None, None, None]
    sb = torch.sqrt(1.0 - ab)[:, None, None, None]
    return (x_t - sb * eps_hat) / sa


def sample_timesteps(total: int, steps: int) -> list[int]:
    """Descending sub-schedule of `steps` distinct timesteps, from the
    final timestep down to 1 (steps = 1 yields [total])."""
    if not 1 <= steps <= total:
        raise ContractError(f"steps must lie in [1, {total}]")
    ts = np.unique(np.round(np.linspace(total, 1, steps)).astype(int))
    return [int(v) for v in ts[::-1]]


def sample(denoiser: Denoiser, adapters, prompt: str, schedule: NoiseSchedule,
           omega: float = DEFAULT_GUIDANCE, steps: int = DEFAULT_SAMPLE_STEPS,
           seed: int = 0, codec: IdentityCodec | None = None,
           style_adapters=None, style_weight: float = 0.5,
           chart_mask: np.ndarray | None = None) -> TextureMap:
    """Deterministic DDIM sampling of one texture from a prompt.

    steps = 1 degenerates to a single denoise of pure noise: the decoded
    reconstruct_x0(x_T, eps_hat, T).
    """
    codec = codec or IdentityCodec()
    res = denoiser.config.resolution
    gen = torch.Generator().manual_seed(seed)
    x = torch.empty(1, 3, res, res).normal_(generator=gen)
    ts = sample_timesteps(schedule.timesteps, steps)

    was_training = denoiser.training
    denoiser.eval()
    try:
        with torch.no_grad():
            for i, t in enumerate(ts):
                eps = cfg_noise(denoiser, adapters, x, prompt, t, omega,
                                style_adapters, style_weight)
                a, b = schedule.coefs(t)
                x0_hat = (x - b * eps) / a
                if i + 1 < len(ts):
                    an, bn = schedule.coefs(ts[i + 1])
                    x = an * x0_hat + bn * eps
                else:
                    x = x0_hat
            img = codec.decode(x)[0].permute(1, 2, 0).numpy().astype(np.float64)
    finally:
        denoiser.train(was_training)
        denoiser.install_adapters(adapters)
    return TextureMap(img, chart_mask)
