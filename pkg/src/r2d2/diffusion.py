"""Reverse-diffusion sampling: forward perturbation, Euler-Maruyama predictor,
Langevin corrector, and the predictor-corrector loop.

Stepping runs down the ladder, i+1 -> i; the i = 0 target uses sigma_0 = 0 so
the final step is an exact denoise onto the data manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule
from .score import ScoreModel

# stream tags keeping the rng draws of each pipeline phase disjoint
PHASE_GENERATE = 0
PHASE_DENOISE = 1
PHASE_SR = 2
PHASE_SR_INIT = 3

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SamplerSettings:
    """Predictor-corrector knobs: corrector steps per predictor step and the
    signal-to-noise ratio r controlling the Langevin step size."""

    corrector_steps: int = 1
    corrector_snr: float = 0.16

    def __post_init__(self):
        if self.corrector_steps < 0:
            raise ValueError(f"corrector_steps must be >= 0, got {self.corrector_steps}")
        if not self.corrector_snr > 0.0:
            raise ValueError(f"corrector_snr must be positive, got {self.corrector_snr}")


class NoiseStreams:
    """Counter-based Gaussian draws addressed by (seed, *path).

    Each path gets an independent Philox stream, so trajectories that share a
    seed share noise draw-for-draw regardless of evaluation order.
    """

    def __init__(self, seed: int, prefix: tuple[int, ...] = ()):
        self.seed = int(seed) & _MASK64
        self.prefix = prefix

    def scoped(self, *path: int) -> "NoiseStreams":
        return NoiseStreams(self.seed, self.prefix + path)

    def normal(self, shape: tuple[int, ...], *path: int) -> np.ndarray:
        entropy = (self.seed,) + self.prefix + path
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
        return gen.standard_normal(shape)


def derived_seed(seed: int, k: int) -> int:
    """Per-sample seed for ensembles: splitmix64 of k xor'd into the base."""
    h = (int(k) + 0x9E3779B97F4A7C15) & _MASK64
    h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
    h = h ^ (h >> 31)
    return (int(seed) ^ h) & _MASK64


def perturb(x0: np.ndarray, sched: NoiseSchedule, t: float, z: np.ndarray) -> np.ndarray:
    """Forward kernel: x0 + sigma(t) * z."""
    if z.shape != x0.shape:
        raise ValueError(f"z shape {z.shape} != x0 shape {x0.shape}")
    return x0 + sched.sigma_continuous(t) * z


def em_predictor_step(
    x: np.ndarray, i: int, model: ScoreModel, sched: NoiseSchedule, z: np.ndarray
) -> np.ndarray:
    """One reverse Euler-Maruyama step from level i+1 down to level i:

    x_i = x_{i+1} + (sigma_{i+1}^2 - sigma_i^2) s(x_{i+1}, sigma_{i+1})
          + sqrt(sigma_{i+1}^2 - sigma_i^2) z
    """
    if not 0 <= i <= sched.n_steps - 1:
        raise ValueError(f"target level {i} outside 0..{sched.n_steps - 1}")
    if z.shape != x.shape:
        raise ValueError(f"z shape {z.shape} != x shape {x.shape}")
    sigma_hi = sched.sigma_at(i + 1)
    sigma_lo = sched.sigma_at(i)
    dvar = sigma_hi**2 - sigma_lo**2
    return x + dvar * model(x, sigma_hi) + math.sqrt(dvar) * z


def langevin_corrector_step(
    x: np.ndarray,
    i: int,
    model: ScoreModel,
    sched: NoiseSchedule,
    snr: float,
    z: np.ndarray,
) -> np.ndarray:
    """Langevin refinement at level i: x + eta*s + sqrt(2 eta)*z with
    eta = 2 (r ||z|| / ||s||)^2.  Identity when the score vanishes."""
    if not 1 <= i <= sched.n_steps:
        raise ValueError(f"corrector level {i} outside 1..{sched.n_steps}")
    if z.shape != x.shape:
        raise ValueError(f"z shape {z.shape} != x shape {x.shape}")
    s = model(x, sched.sigma_at(i))
    s_norm = float(np.linalg.norm(s))
    if s_norm == 0.0:
        return x
    z_norm = float(np.linalg.norm(z))
    eta = 2.0 * (snr * z_norm / s_norm) ** 2
    return x + eta * s + math.sqrt(2.0 * eta) * z


def pc_step(
    x: np.ndarray,
    i: int,
    model: ScoreModel,
    settings: SamplerSettings,
    sched: NoiseSchedule,
    noise: NoiseStreams,
) -> np.ndarray:
    """Predictor to level i, then corrector sweeps at level i.

    Correctors are skipped at i = 0 where sigma = 0 leaves the Langevin step
    size undefined.  Noise paths: (i, 0) predictor, (i, j) corrector j.
    """
    x = em_predictor_step(x, i, model, sched, noise.normal(x.shape, i, 0))
    if i >= 1:
        for j in range(1, settings.corrector_steps + 1):
            x = langevin_corrector_step(
                x, i, model, sched, settings.corrector_snr, noise.normal(x.shape, i, j)
            )
    return x


def generate(
    model: ScoreModel,
    sched: NoiseSchedule,
    settings: SamplerSettings,
    shape: tuple[int, int],
    seed: int,
) -> np.ndarray:
    """Unconditional sample: x_N ~ N(0, sigma_max^2 I), then N reverse steps."""
    noise = NoiseStreams(seed, (PHASE_GENERATE,))
    x = sched.sigma_max * noise.normal(shape, sched.n_steps, 0)
    for i in range(sched.n_steps - 1, -1, -1):
        x = pc_step(x, i, model, settings, sched, noise)
    return x
