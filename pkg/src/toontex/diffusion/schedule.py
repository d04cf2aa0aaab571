"""Noise schedule: per-step variances beta_t and their cumulative products.

Timesteps are 1-based: t in [1, T]. alpha_bar[t-1] is the cumulative
product of (1 - beta) up to and including step t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.ndim != 1 or len(self.betas) < 1:
            raise ContractError("betas must be a nonempty 1-D array")
        if np.any(self.betas <= 0) or np.any(self.betas >= 1):
            raise ContractError("betas must lie strictly inside (0, 1)")
        self.alphas = 1.0 - self.betas
        self.alpha_bar = np.cumprod(self.alphas)
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ContractError("alpha_bar must be strictly decreasing")

    @classmethod
    def linear(cls, timesteps: int = 1000, beta_start: float = 1e-4,
               beta_end: float = 0.02) -> "NoiseSchedule":
        return cls(np.linspace(beta_start, beta_end, timesteps))

    @property
    def timesteps(self) -> int:
        return len(self.betas)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.timesteps:
            raise ContractError(f"t={t} outside [1, {self.timesteps}]")
        return t

    def coefs(self, t: int) -> tuple[float, float]:
        """(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t)) for a 1-based t."""
        ab = self.alpha_bar[self.check_t(t) - 1]
        return float(np.sqrt(ab)), float(np.sqrt(1.0 - ab))
