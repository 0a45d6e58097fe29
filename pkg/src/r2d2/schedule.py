"""Geometric noise schedule for the variance-exploding diffusion process.

sigma(t) = sigma_min * (sigma_max / sigma_min)**t on t in [0, 1], discretized
into N ladder levels sigma_i = sigma((i - 1) / (N - 1)) for i = 1..N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


class InverseResult(NamedTuple):
    t: float
    clamped: bool


@dataclass(frozen=True)
class NoiseSchedule:
    """Geometric ladder between sigma_min and sigma_max with N levels.

    epsilon is the smallest usable diffusion time; inversions that land below
    it (or above 1) are clamped and flagged.
    """

    sigma_min: float = 0.01
    sigma_max: float = 378.0
    n_steps: int = 1000
    epsilon: float = 1e-5

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ValueError(f"need 0 < sigma_min < sigma_max, got ({self.sigma_min}, {self.sigma_max})")
        if self.n_steps < 2:
            raise ValueError(f"need n_steps >= 2, got {self.n_steps}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"need epsilon in (0, 1), got {self.epsilon}")

    @property
    def log_ratio(self) -> float:
        return math.log(self.sigma_max / self.sigma_min)

    def sigma_continuous(self, t: float) -> float:
        """sigma(t) = sigma_min * (sigma_max/sigma_min)**t for t in [0, 1]."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"t={t} outside [0, 1]")
        return self.sigma_min * math.exp(self.log_ratio * t)

    def sigma_at(self, i: int) -> float:
        """Ladder level sigma_i for i = 1..N; sigma_0 = 0 closes the ladder.

        The i = 0 extension is what the final reverse step lands on, so the
        terminal sample carries no leftover schedule noise.
        """
        if i == 0:
            return 0.0
        if not 1 <= i <= self.n_steps:
            raise ValueError(f"ladder index {i} outside 0..{self.n_steps}")
        return self.sigma_continuous((i - 1) / (self.n_steps - 1))

    def sigma_inverse(self, sigma_val: float) -> InverseResult:
        """t = ln(sigma/sigma_min) / ln(sigma_max/sigma_min), clamped to [epsilon, 1].

        Returns the time and whether clamping fired.  sigma_val <= 0 is a
        domain error; values below sigma_min clamp to epsilon, above sigma_max
        clamp to 1.
        """
        if sigma_val <= 0.0:
            raise ValueError(f"sigma_val must be positive, got {sigma_val}")
        t = math.log(sigma_val / self.sigma_min) / self.log_ratio
        if t < self.epsilon:
            return InverseResult(self.epsilon, True)
        if t > 1.0:
            return InverseResult(1.0, True)
        return InverseResult(t, False)
