"""Denoising and super-resolution pipelines over the reverse diffusion core.

The denoiser hijacks the reverse process at the estimated noise level: with
t' = sigma^-1(sigma_est) the loop runs N' = round(alpha * t' * N) regularized
predictor-corrector steps, mixing the low-frequency spectrum of the noisy
input back in after every step.  alpha < 1 deliberately starts lower on the
ladder than the estimate suggests, trading denoising strength for fidelity.

Noise stream layout (all draws keyed by seed and path, never by call order):
  denoise step i, substep j  -> (PHASE_DENOISE, i, j)    j=0 predictor
  SR init draw               -> (PHASE_SR_INIT, M, 0)
  SR step j, substep s       -> (PHASE_SR, j, s)
Ensemble sample k runs the whole tree under derived_seed(seed, k).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .consistency import SrOperator, build_lowfreq_mask, lowfreq_mix, sr_data_consistency
from .diffusion import (
    PHASE_DENOISE,
    PHASE_SR,
    PHASE_SR_INIT,
    NoiseStreams,
    SamplerSettings,
    derived_seed,
    pc_step,
)
from .estimation import NoiseEstimate, estimate_noise_std
from .schedule import NoiseSchedule
from .score import ScoreModel

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class DenoiseConfig:
    alpha: float = 0.2
    lam: float = 0.005
    omega_fraction: float = 0.125
    sr_factor: int = 2
    sr_steps: int = 20
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    seed: int = 0
    sigma_override: float | None = None
    strict_literal_dc: bool = False
    corrector_in_denoise: bool = True
    corrector_in_sr: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if not 0.0 < self.omega_fraction <= 1.0:
            raise ValueError(f"omega_fraction must be in (0, 1], got {self.omega_fraction}")
        if not (isinstance(self.sr_factor, int) and self.sr_factor >= 1):
            raise ValueError(f"sr_factor must be an integer >= 1, got {self.sr_factor}")
        if self.sr_steps < 0:
            raise ValueError(f"sr_steps must be >= 0, got {self.sr_steps}")
        if self.sr_steps > self.schedule.n_steps:
            raise ValueError(
                f"sr_steps {self.sr_steps} exceeds the {self.schedule.n_steps}-level ladder"
            )
        if self.sigma_override is not None and not self.sigma_override > 0.0:
            raise ValueError(f"sigma_override must be positive, got {self.sigma_override}")


@dataclass(frozen=True)
class StepPlan:
    sigma_est: float
    t_prime: float
    n_prime: int
    clamped: bool
    estimate: NoiseEstimate | None = None


@dataclass(frozen=True)
class PosteriorEnsemble:
    samples: tuple[np.ndarray, ...]
    mean_map: np.ndarray
    std_map: np.ndarray
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class SweepEntry:
    alpha: float
    image: np.ndarray
    metrics: dict


def tweedie_denoise(x_noisy: np.ndarray, model: ScoreModel, sigma: float) -> np.ndarray:
    """Posterior-mean shortcut: x + sigma^2 * s(x, sigma) in one step."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return x_noisy + sigma**2 * model(x_noisy, sigma)


def plan_steps(
    x_noisy: np.ndarray,
    cfg: DenoiseConfig,
    estimator: Callable[[np.ndarray], NoiseEstimate] | None = None,
) -> StepPlan:
    """Map the noise estimate to a hijack point: t' = sigma^-1(sigma_est) and
    N' = round(alpha * t' * N).

    Estimates below sigma_min have no in-range diffusion time: the plan
    short-circuits to N' = 0 (identity denoising).  Above sigma_max the start
    clamps to t' = 1 with a warning.
    """
    sched = cfg.schedule
    estimate = None
    if cfg.sigma_override is not None:
        sigma_est = cfg.sigma_override
    else:
        estimate = (estimator or estimate_noise_std)(x_noisy)
        sigma_est = estimate.sigma_est
    if sigma_est < sched.sigma_min:
        return StepPlan(sigma_est, sched.epsilon, 0, True, estimate)
    t_prime, clamped = sched.sigma_inverse(sigma_est)
    if clamped:
        logger.warning(
            "noise estimate %.4g above sigma_max %.4g; starting from t' = 1",
            sigma_est,
            sched.sigma_max,
        )
    n_prime = int(round(cfg.alpha * t_prime * sched.n_steps))
    return StepPlan(sigma_est, t_prime, n_prime, clamped, estimate)


def _flag_range(x_in: np.ndarray, x_out: np.ndarray, sched: NoiseSchedule, phase: str):
    bound = float(np.max(np.abs(x_in))) + 5.0 * sched.sigma_max
    peak = float(np.max(np.abs(x_out)))
    if peak > bound:
        logger.warning("%s output peak %.4g exceeds sanity bound %.4g", phase, peak, bound)


def _phase_settings(cfg: DenoiseConfig, corrector_on: bool) -> SamplerSettings:
    if corrector_on:
        return cfg.sampler
    return replace(cfg.sampler, corrector_steps=0)


def r2d2_denoise(
    x_noisy: np.ndarray,
    model: ScoreModel,
    cfg: DenoiseConfig,
    noise: NoiseStreams | None = None,
    *,
    x_init: np.ndarray | None = None,
    plan: StepPlan | None = None,
) -> np.ndarray:
    """Hijacked regularized denoising: N' PC steps from x_{N'} = x_noisy, with
    the low-frequency mix against x_noisy after every step.

    x_init substitutes the starting iterate while keeping x_noisy as the
    regularization reference (the planning input is always x_noisy).
    """
    if plan is None:
        plan = plan_steps(x_noisy, cfg)
    if noise is None:
        noise = NoiseStreams(cfg.seed)
    x = x_noisy if x_init is None else x_init
    if plan.n_prime == 0:
        return x
    mask = build_lowfreq_mask(x_noisy.shape, cfg.omega_fraction)
    settings = _phase_settings(cfg, cfg.corrector_in_denoise)
    stream = noise.scoped(PHASE_DENOISE)
    for i in range(plan.n_prime - 1, -1, -1):
        x = pc_step(x, i, model, settings, cfg.schedule, stream)
        x = lowfreq_mix(x, x_noisy, cfg.lam, mask)
    _flag_range(x_noisy, x, cfg.schedule, "denoise")
    return x


def sr_enhance(
    x0: np.ndarray,
    model: ScoreModel,
    cfg: DenoiseConfig,
    noise: NoiseStreams | None = None,
) -> np.ndarray:
    """Super-resolution refinement of x0: start from the forward-diffused
    x_M = x0 + sigma_M * z and alternate PC steps with block-mean data
    consistency down to level 0."""
    m = cfg.sr_steps
    if m < 1:
        raise ValueError(f"sr_enhance needs sr_steps >= 1, got {m}")
    op = SrOperator(cfg.sr_factor)
    op.validate(x0.shape)
    if noise is None:
        noise = NoiseStreams(cfg.seed)
    sigma_m = cfg.schedule.sigma_at(m)
    x = x0 + sigma_m * noise.scoped(PHASE_SR_INIT).normal(x0.shape, m, 0)
    settings = _phase_settings(cfg, cfg.corrector_in_sr)
    stream = noise.scoped(PHASE_SR)
    for j in range(m - 1, -1, -1):
        x = pc_step(x, j, model, settings, cfg.schedule, stream)
        x = sr_data_consistency(x, x0, op, strict_literal=cfg.strict_literal_dc)
    _flag_range(x0, x, cfg.schedule, "sr")
    return x


def r2d2_plus(
    x_noisy: np.ndarray,
    model: ScoreModel,
    cfg: DenoiseConfig,
    noise: NoiseStreams | None = None,
    *,
    plan: StepPlan | None = None,
) -> np.ndarray:
    """Full pipeline: regularized denoising, then the SR phase when
    sr_steps >= 1."""
    if noise is None:
        noise = NoiseStreams(cfg.seed)
    x = r2d2_denoise(x_noisy, model, cfg, noise, plan=plan)
    if cfg.sr_steps >= 1:
        x = sr_enhance(x, model, cfg, noise)
    return x


def posterior_ensemble(
    x_noisy: np.ndarray,
    model: ScoreModel,
    cfg: DenoiseConfig,
    k: int,
    *,
    plan: StepPlan | None = None,
    workers: int = 1,
) -> PosteriorEnsemble:
    """K independent pipeline runs under derived seeds; pixelwise mean and
    standard deviation in double precision."""
    if k < 1:
        raise ValueError(f"ensemble size must be >= 1, got {k}")
    if plan is None:
        plan = plan_steps(x_noisy, cfg)
    seeds = tuple(derived_seed(cfg.seed, j) for j in range(k))

    def run(seed: int) -> np.ndarray:
        return r2d2_plus(x_noisy, model, cfg, NoiseStreams(seed), plan=plan)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = tuple(pool.map(run, seeds))
    else:
        samples = tuple(run(s) for s in seeds)
    stack = np.stack(samples).astype(np.float64)
    return PosteriorEnsemble(
        samples=samples,
        mean_map=stack.mean(axis=0),
        std_map=stack.std(axis=0),
        seeds=seeds,
    )


def sweep_alpha(
    x_noisy: np.ndarray,
    model: ScoreModel,
    cfg: DenoiseConfig,
    alphas: Sequence[float] = DEFAULT_ALPHA_GRID,
    estimator: Callable[[np.ndarray], NoiseEstimate] | None = None,
) -> list[SweepEntry]:
    """One pipeline run per alpha against a single shared noise estimate; every
    run reuses the base seed, so duplicate alphas are bit-identical and the
    grid is noise-paired."""
    for a in alphas:
        if not 0.0 < a <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {a}")
    base_plan = plan_steps(x_noisy, cfg, estimator)
    entries = []
    for a in alphas:
        acfg = replace(cfg, alpha=a)
        plan = _replan(base_plan, acfg)
        image = r2d2_plus(x_noisy, model, acfg, plan=plan)
        rms_change = float(np.sqrt(np.mean((image - x_noisy) ** 2)))
        entries.append(
            SweepEntry(
                alpha=a,
                image=image,
                metrics={
                    "sigma_est": plan.sigma_est,
                    "t_prime": plan.t_prime,
                    "n_prime": plan.n_prime,
                    "rms_change_from_input": rms_change,
                },
            )
        )
    return entries


def _replan(base: StepPlan, cfg: DenoiseConfig) -> StepPlan:
    """Recompute N' for a new alpha from an already-made estimate."""
    if base.n_prime == 0 and base.sigma_est < cfg.schedule.sigma_min:
        return replace(base)
    n_prime = int(round(cfg.alpha * base.t_prime * cfg.schedule.n_steps))
    return replace(base, n_prime=n_prime)
