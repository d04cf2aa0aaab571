"""From-scratch denoising diffusion core with low-rank adapters."""

from .schedule import NoiseSchedule
from .textenc import Vocabulary, MAX_TOKENS, PAD_ID, NULL_ID
from .lora import AdapterSet, AdaptedLinear, LoraAdapter, adapted_projection, merge_style_adapter
from .unet import Denoiser, DenoiserConfig
from .core import (
    DiffusionLossResult,
    IdentityCodec,
    cfg_noise,
    diffusion_loss,
    forward_diffuse,
    predict_noise,
    reconstruct_x0,
    reconstruct_x0_batch,
    sample,
    sample_timesteps,
)
from .checkpoint import (
    load_adapters,
    load_checkpoint,
    save_adapters,
    save_checkpoint,
    state_bytes,
)

__all__ = [
    "AdaptedLinear",
    "AdapterSet",
    "Denoiser",
    "DenoiserConfig",
    "DiffusionLossResult",
    "IdentityCodec",
    "LoraAdapter",
    "MAX_TOKENS",
    "NULL_ID",
    "NoiseSchedule",
    "PAD_ID",
    "Vocabulary",
    "adapted_projection",
    "cfg_noise",
    "diffusion_loss",
    "forward_diffuse",
    "load_adapters",
    "load_checkpoint",
    "merge_style_adapter",
    "predict_noise",
    "reconstruct_x0",
    "reconstruct_x0_batch",
    "sample",
    "sample_timesteps",
    "save_adapters",
    "save_checkpoint",
    "state_bytes",
]
