"""Regularized reverse-diffusion denoising with super-resolution (R2D2+).

Hijacked VE-SDE predictor-corrector sampling with per-step low-frequency
regularization, block-mean data consistency for super-resolution, eigenvalue
based single-image noise estimation, posterior-ensemble uncertainty maps, and
ROI metrics, behind analytic or remote score models.
"""

from .consistency import (
    SrOperator,
    build_lowfreq_mask,
    downup_project,
    lowfreq_mix,
    lowpass,
    sr_data_consistency,
)
from .diffusion import (
    NoiseStreams,
    SamplerSettings,
    derived_seed,
    em_predictor_step,
    generate,
    langevin_corrector_step,
    pc_step,
    perturb,
)
from .estimation import (
    NoiseEstimate,
    estimate_noise_std,
    extract_patches,
    patch_covariance_eigenvalues,
)
from .imgio import ImageIOError, load_image, save_image
from .metrics import RoiSpec, circular_mask, cnr, roi_from_json, roi_to_json, snr
from .phantoms import make_phantom, make_phantom_with_rois
from .pipeline import (
    DEFAULT_ALPHA_GRID,
    DenoiseConfig,
    PosteriorEnsemble,
    StepPlan,
    SweepEntry,
    plan_steps,
    posterior_ensemble,
    r2d2_denoise,
    r2d2_plus,
    sr_enhance,
    sweep_alpha,
    tweedie_denoise,
)
from .schedule import NoiseSchedule
from .score import (
    GaussianPriorScore,
    GmmComponent,
    GmmPriorScore,
    RemoteProtocolError,
    RemoteScore,
    RemoteScoreError,
    RemoteServerError,
    ScoreModel,
    dsm_loss,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ALPHA_GRID",
    "DenoiseConfig",
    "GaussianPriorScore",
    "GmmComponent",
    "GmmPriorScore",
    "ImageIOError",
    "NoiseEstimate",
    "NoiseSchedule",
    "NoiseStreams",
    "PosteriorEnsemble",
    "RemoteProtocolError",
    "RemoteScore",
    "RemoteScoreError",
    "RemoteServerError",
    "RoiSpec",
    "SamplerSettings",
    "ScoreModel",
    "SrOperator",
    "StepPlan",
    "SweepEntry",
    "build_lowfreq_mask",
    "circular_mask",
    "cnr",
    "derived_seed",
    "downup_project",
    "dsm_loss",
    "em_predictor_step",
    "estimate_noise_std",
    "extract_patches",
    "generate",
    "langevin_corrector_step",
    "load_image",
    "lowfreq_mix",
    "lowpass",
    "make_phantom",
    "make_phantom_with_rois",
    "patch_covariance_eigenvalues",
    "pc_step",
    "perturb",
    "plan_steps",
    "posterior_ensemble",
    "r2d2_denoise",
    "r2d2_plus",
    "roi_from_json",
    "roi_to_json",
    "save_image",
    "snr",
    "sr_data_consistency",
    "sr_enhance",
    "sweep_alpha",
    "tweedie_denoise",
]
