"""Low-rank adapters over frozen projection matrices.

h = W0 x + B(A x), optionally plus a weighted second adapter for style
mixing. B starts at zero so a freshly adapted model is bitwise identical
to its base.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ContractError

DEFAULT_RANK = 8


class LoraAdapter(nn.Module):
    """A: (rank, d_in) Gaussian(0, 1/rank); B: (d_out, rank) zeros."""

    def __init__(self, d_in: int, d_out: int, rank: int = DEFAULT_RANK,
                 generator: torch.Generator | None = None):
        super().__init__()
        self.rank = rank
        a = torch.empty(rank, d_in)
        a.normal_(0.0, rank ** -0.5, generator=generator)
        self.A = nn.Parameter(a)
        self.B = nn.Parameter(torch.zeros(d_out, rank))

    def delta(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(F.linear(x, self.A), self.B)


def adapted_projection(w0: torch.Tensor | nn.Linear, adapter: LoraAdapter | None,
                       x: torch.Tensor) -> torch.Tensor:
    """Base projection plus the low-rank path."""
    base = w0(x) if isinstance(w0, nn.Linear) else F.linear(x, w0)
    if adapter is None:
        return base
    return base + adapter.delta(x)


def merge_style_adapter(w0: torch.Tensor | nn.Linear, adapter_uv: LoraAdapter,
                        adapter_style: LoraAdapter, w: float,
                        x: torch.Tensor) -> torch.Tensor:
    """h = W0 x + B_uv A_uv x + w * B_s A_s x."""
    base = w0(x) if isinstance(w0, nn.Linear) else F.linear(x, w0)
    return base + adapter_uv.delta(x) + w * adapter_style.delta(x)


class AdaptedLinear(nn.Module):
    """A frozen linear projection with optional installed adapters.

    Installed adapters are plain references, deliberately NOT registered
    as submodules: the owning network's parameters(), state_dict() and
    requires_grad_ must never see adapter weights.
    """

    def __init__(self, d_in: int, d_out: int, bias: bool = False):
        super().__init__()
        self.base = nn.Linear(d_in, d_out, bias=bias)
        self.d_in = d_in
        self.d_out = d_out
        object.__setattr__(self, "adapter", None)
        object.__setattr__(self, "style_adapter", None)
        self.style_weight = 0.0

    def install(self, adapter: LoraAdapter | None,
                style_adapter: LoraAdapter | None = None,
                style_weight: float = 0.0) -> None:
        object.__setattr__(self, "adapter", adapter)
        object.__setattr__(self, "style_adapter", style_adapter)
        self.style_weight = style_weight

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.base(x)
        if self.adapter is not None:
            h = h + self.adapter.delta(x)
        if self.style_adapter is not None and self.style_weight != 0.0:
            h = h + self.style_weight * self.style_adapter.delta(x)
        return h


class AdapterSet(nn.Module):
    """Named adapters for every adapted projection site of a denoiser."""

    def __init__(self, adapters: dict[str, LoraAdapter]):
        super().__init__()
        # ModuleDict forbids dots in keys; store site names with "/"
        self.table = nn.ModuleDict(
            {name.replace(".", "/"): mod for name, mod in adapters.items()})

    @classmethod
    def for_denoiser(cls, denoiser, rank: int = DEFAULT_RANK,
                     seed: int = 0) -> "AdapterSet":
        gen = torch.Generator().manual_seed(seed)
        table = {}
        for name, site in denoiser.adapted_sites():
            table[name] = LoraAdapter(site.d_in, site.d_out, rank, generator=gen)
        return cls(table)

    def __getitem__(self, name: str) -> LoraAdapter:
        key = name.replace(".", "/")
        if key not in self.table:
            raise ContractError(f"no adapter for site {name!r}")
        return self.table[key]

    def __contains__(self, name: str) -> bool:
        return name.replace(".", "/") in self.table

    def names(self) -> list[str]:
        return [k.replace("/", ".") for k in self.table.keys()]
