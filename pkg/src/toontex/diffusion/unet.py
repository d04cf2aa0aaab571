"""Text-conditioned denoiser: a small 3-level UNet.

Channel widths (32, 64, 128); one self-attention and one cross-attention
block at each of the two coarsest levels, placed on the decoder path.
Query/key/value projections of every attention block are AdaptedLinear
sites, so low-rank adapters can be installed without touching the base.
Residual-branch output convolutions and attention output projections are
zero-initialized: a fresh model predicts exactly zero noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ContractError
from .textenc import MAX_TOKENS, Vocabulary, grammar_words
from .lora import AdaptedLinear


@dataclass
class DenoiserConfig:
    resolution: int = 64
    channels: tuple[int, int, int] = (32, 64, 128)
    text_dim: int = 64
    time_dim: int = 128
    num_heads: int = 4
    max_tokens: int = MAX_TOKENS
    timesteps: int = 1000
    vocab_words: list[str] = field(default_factory=grammar_words)

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution, "channels": list(self.channels),
            "text_dim": self.text_dim, "time_dim": self.time_dim,
            "num_heads": self.num_heads, "max_tokens": self.max_tokens,
            "timesteps": self.timesteps, "vocab_words": list(self.vocab_words),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


def _zero(module: nn.Module) -> nn.Module:
    nn.init.zeros_(module.weight)
    if module.bias is not None:
        nn.init.zeros_(module.bias)
    return module


class ResBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, c_out)
        self.norm2 = nn.GroupNorm(8, c_out)
        self.conv2 = _zero(nn.Conv2d(c_out, c_out, 3, padding=1))
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time_proj(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


def _heads_split(x: torch.Tensor, heads: int) -> torch.Tensor:
    b, n, c = x.shape
    return x.view(b, n, heads, c // heads).transpose(1, 2)


def _heads_join(x: torch.Tensor) -> torch.Tensor:
    b, h, n, d = x.shape
    return x.transpose(1, 2).reshape(b, n, h * d)


class SelfAttention(nn.Module):
    def __init__(self, channels: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = nn.GroupNorm(8, channels)
        self.q = AdaptedLinear(channels, channels)
        self.k = AdaptedLinear(channels, channels)
        self.v = AdaptedLinear(channels, channels)
        self.out = _zero(nn.Linear(channels, channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, hh, ww = x.shape
        t = self.norm(x).reshape(b, c, hh * ww).transpose(1, 2)
        q = _heads_split(self.q(t), self.heads)
        k = _heads_split(self.k(t), self.heads)
        v = _heads_split(self.v(t), self.heads)
        o = self.out(_heads_join(F.scaled_dot_product_attention(q, k, v)))
        return x + o.transpose(1, 2).reshape(b, c, hh, ww)


class CrossAttention(nn.Module):
    def __init__(self, channels: int, text_dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.norm = nn.GroupNorm(8, channels)
        self.q = AdaptedLinear(channels, channels)
        self.k = AdaptedLinear(text_dim, channels)
        self.v = AdaptedLinear(text_dim, channels)
        self.out = _zero(nn.Linear(channels, channels))

    def forward(self, x: torch.Tensor, context: torch.Tensor) -> torch.Tensor:
        b, c, hh, ww = x.shape
        t = self.norm(x).reshape(b, c, hh * ww).transpose(1, 2)
        q = _heads_split(self.q(t), self.heads)
        k = _heads_split(self.k(context), self.heads)
        v = _heads_split(self.v(context), self.heads)
        o = self.out(_heads_join(F.scaled_dot_product_attention(q, k, v)))
        return x + o.transpose(1, 2).reshape(b, c, hh, ww)


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float32)[:, None]
    i = torch.arange(dim // 2, dtype=torch.float32)[None, :]
    angles = pos / torch.pow(10000.0, 2 * i / dim)
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class Denoiser(nn.Module):
    """Base denoiser. Holds no adapter parameters; adapters are installed
    into the AdaptedLinear sites before a forward pass."""

    def __init__(self, config: DenoiserConfig | None = None):
        super().__init__()
        self.config = config or DenoiserConfig()
        c0, c1, c2 = self.config.channels
        tdim = self.config.time_dim
        xdim = self.config.text_dim
        heads = self.config.num_heads
        self.vocab = Vocabulary(list(self.config.vocab_words))

        self.time_table = nn.Embedding(self.config.timesteps + 1, tdim)
        self.time_mlp = nn.Sequential(nn.Linear(tdim, tdim), nn.SiLU(),
                                      nn.Linear(tdim, tdim))
        self.token_emb = nn.Embedding(self.vocab.size, xdim)
        self.register_buffer(
            "positions", sinusoidal_positions(self.config.max_tokens, xdim))

        self.stem = nn.Conv2d(3, c0, 3, padding=1)
        self.enc0 = ResBlock(c0, c0, tdim)
        self.down1 = nn.Conv2d(c0, c1, 3, stride=2, padding=1)
        self.enc1 = ResBlock(c1, c1, tdim)
        self.down2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = ResBlock(c2, c2, tdim)
        self.mid = ResBlock(c2, c2, tdim)
        self.dec2 = ResBlock(c2 + c2, c2, tdim)
        self.self2 = SelfAttention(c2, heads)
        self.cross2 = CrossAttention(c2, xdim, heads)
        self.up2 = nn.Conv2d(c2, c1, 3, padding=1)
        self.dec1 = ResBlock(c1 + c1, c1, tdim)
        self.self1 = SelfAttention(c1, heads)
        self.cross1 = CrossAttention(c1, xdim, heads)
        self.up1 = nn.Conv2d(c1, c0, 3, padding=1)
        self.dec0 = ResBlock(c0 + c0, c0, tdim)
        self.head_norm = nn.GroupNorm(8, c0)
        self.head = _zero(nn.Conv2d(c0, 3, 3, padding=1))

    def adapted_sites(self):
        """Stable (name, AdaptedLinear) listing of every adapter site."""
        for block_name in ("self2", "cross2", "self1", "cross1"):
            block = getattr(self, block_name)
            for proj in ("q", "k", "v"):
                yield f"{block_name}.{proj}", getattr(block, proj)

    def install_adapters(self, adapters, style_adapters=None,
                         style_weight: float = 0.0) -> None:
        for name, site in self.adapted_sites():
            main = adapters[name] if adapters is not None else None
            if style_adapters is not None and name in style_adapters:
                site.install(main, style_adapters[name], style_weight)
            else:
                site.install(main)

    def encode_text(self, token_ids: torch.Tensor) -> torch.Tensor:
        """(B, L) token ids -> (B, L, text_dim) embeddings with positions."""
        emb = self.token_emb(token_ids)
        return emb + self.positions[None, : token_ids.shape[1]].to(emb.dtype)

    def forward(self, x: torch.Tensor, token_ids: torch.Tensor,
                t: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != self.config.resolution \
                or x.shape[3] != self.config.resolution:
            raise ContractError(
                f"latent shape {tuple(x.shape)} does not match model resolution "
                f"{self.config.resolution}")
        temb = self.time_mlp(self.time_table(t))
        ctx = self.encode_text(token_ids)

        h0 = self.enc0(self.stem(x), temb)
        h1 = self.enc1(self.down1(h0), temb)
        h2 = self.enc2(self.down2(h1), temb)
        m = self.mid(h2, temb)
        d2 = self.dec2(torch.cat([m, h2], dim=1), temb)
        d2 = self.cross2(self.self2(d2), ctx)
        d1 = self.up2(F.interpolate(d2, scale_factor=2.0, mode="nearest"))
        d1 = self.dec1(torch.cat([d1, h1], dim=1), temb)
        d1 = self.cross1(self.self1(d1), ctx)
        d0 = self.up1(F.interpolate(d1, scale_factor=2.0, mode="nearest"))
        d0 = self.dec0(torch.cat([d0, h0], dim=1), temb)
        return self.head(F.silu(self.head_norm(d0)))


def build_denoiser(config: DenoiserConfig | None = None, seed: int = 0) -> Denoiser:
    """Deterministically initialized denoiser."""
    torch.manual_seed(seed)
    return Denoiser(config)
