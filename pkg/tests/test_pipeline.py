import numpy as np
import pytest

from r2d2.consistency import SrOperator, build_lowfreq_mask, lowpass
from r2d2.diffusion import NoiseStreams, SamplerSettings
from r2d2.phantoms import make_phantom, make_phantom_with_rois
from r2d2.pipeline import (
    DenoiseConfig,
    plan_steps,
    posterior_ensemble,
    r2d2_denoise,
    r2d2_plus,
    sr_enhance,
    sweep_alpha,
    tweedie_denoise,
)
from r2d2.schedule import NoiseSchedule
from r2d2.score import GaussianPriorScore


# ---------------------------------------------------------------- tweedie


def test_tweedie_delta_prior_recovers_mean_exactly():
    rng = np.random.default_rng(60)
    x0 = rng.normal(size=(8, 8))
    x = x0 + 0.3 * rng.normal(size=(8, 8))
    out = tweedie_denoise(x, GaussianPriorScore(mean=x0, std=0.0), 0.3)
    np.testing.assert_allclose(out, x0, atol=1e-12)


def test_tweedie_gaussian_prior_is_posterior_mean():
    rng = np.random.default_rng(61)
    m, s, sigma = 0.4, 0.7, 0.25
    x = rng.normal(size=(8, 8))
    out = tweedie_denoise(x, GaussianPriorScore(mean=m, std=s), sigma)
    np.testing.assert_allclose(out, (s**2 * x + sigma**2 * m) / (s**2 + sigma**2), rtol=1e-12)


def test_tweedie_zero_score_is_identity():
    x = np.full((4, 4), 1.25)
    out = tweedie_denoise(x, lambda v, s: np.zeros_like(v), 0.5)
    np.testing.assert_array_equal(out, x)


def test_tweedie_sigma_domain():
    with pytest.raises(ValueError):
        tweedie_denoise(np.zeros((2, 2)), GaussianPriorScore(), 0.0)


# ------------------------------------------------------------------- plan


def test_plan_full_ladder_at_sigma_max():
    cfg = DenoiseConfig(alpha=1.0, sigma_override=378.0)
    plan = plan_steps(np.zeros((8, 8)), cfg)
    assert plan.n_prime == cfg.schedule.n_steps
    assert plan.t_prime == 1.0
    assert not plan.clamped


def test_plan_constant_image_short_circuits():
    plan = plan_steps(np.full((64, 64), 0.5), DenoiseConfig())
    assert plan.n_prime == 0
    assert plan.clamped
    assert plan.t_prime == DenoiseConfig().schedule.epsilon


def test_plan_geometric_midpoint():
    mid = float(np.sqrt(0.01 * 378.0))
    plan = plan_steps(np.zeros((8, 8)), DenoiseConfig(alpha=0.2, sigma_override=mid))
    assert plan.n_prime == 100


def test_plan_clamps_above_sigma_max():
    plan = plan_steps(np.zeros((8, 8)), DenoiseConfig(alpha=1.0, sigma_override=1e5))
    assert plan.clamped
    assert plan.t_prime == 1.0
    assert plan.n_prime == 1000


def test_plan_override_skips_estimator():
    def exploding(_):
        raise AssertionError("estimator must not run when sigma_override is set")

    plan = plan_steps(np.zeros((8, 8)), DenoiseConfig(sigma_override=0.1), exploding)
    assert plan.estimate is None
    assert plan.sigma_est == 0.1


def test_config_validation():
    with pytest.raises(ValueError):
        DenoiseConfig(alpha=0.0)
    with pytest.raises(ValueError):
        DenoiseConfig(alpha=1.2)
    with pytest.raises(ValueError):
        DenoiseConfig(lam=-0.1)
    with pytest.raises(ValueError):
        DenoiseConfig(sr_factor=0)
    with pytest.raises(ValueError):
        DenoiseConfig(sr_steps=-1)
    with pytest.raises(ValueError):
        DenoiseConfig(sr_steps=2000)
    with pytest.raises(ValueError):
        DenoiseConfig(sigma_override=-1.0)


# ---------------------------------------------------------------- denoise


def test_denoise_identity_when_no_steps():
    x = np.full((64, 64), 0.5)
    out = r2d2_denoise(x, GaussianPriorScore(), DenoiseConfig())
    np.testing.assert_array_equal(out, x)


def test_denoise_full_replacement_at_lambda_one():
    ph = make_phantom(64, 7)
    noisy = ph + 0.1 * NoiseStreams(70).normal(ph.shape, 0)
    cfg = DenoiseConfig(lam=1.0, sr_steps=0, seed=1)
    out = r2d2_denoise(noisy, GaussianPriorScore(mean=ph, std=0.0), cfg)
    mask = build_lowfreq_mask(noisy.shape, cfg.omega_fraction)
    np.testing.assert_allclose(out, lowpass(noisy, mask), atol=1e-12)


def test_denoise_reduces_rms_error():
    # delta-prior oracle at sigma = 0.1, alpha = 1: averaged over 20 trials
    sigma = 0.1
    gains = []
    for trial in range(20):
        ph = make_phantom(64, trial)
        noisy = ph + sigma * NoiseStreams(700 + trial).normal(ph.shape, 0)
        cfg = DenoiseConfig(alpha=1.0, sr_steps=0, seed=trial)
        out = r2d2_denoise(noisy, GaussianPriorScore(mean=ph, std=0.0), cfg)
        gains.append(
            float(np.sqrt(np.mean((noisy - ph) ** 2)))
            - float(np.sqrt(np.mean((out - ph) ** 2)))
        )
    assert np.mean(gains) > 0


def test_denoise_deterministic():
    ph = make_phantom(32, 3)
    noisy = ph + 0.08 * NoiseStreams(71).normal(ph.shape, 0)
    cfg = DenoiseConfig(sr_steps=0, seed=9)
    model = GaussianPriorScore(mean=ph, std=0.0)
    a = r2d2_denoise(noisy, model, cfg)
    b = r2d2_denoise(noisy, model, cfg)
    np.testing.assert_array_equal(a, b)


def test_denoise_trajectories_merge_at_ladder_bottom():
    # the final step's contraction factor sigma_0^2/sigma_1^2 = 0 erases any
    # initial difference when noise and the reference are shared
    ph = make_phantom(32, 4)
    noisy = ph + 0.1 * NoiseStreams(72).normal(ph.shape, 0)
    cfg = DenoiseConfig(alpha=1.0, sr_steps=0, seed=13, corrector_in_denoise=False)
    model = GaussianPriorScore(mean=ph, std=0.0)
    a = r2d2_denoise(noisy, model, cfg)
    b = r2d2_denoise(noisy, model, cfg, x_init=noisy + 0.7)
    np.testing.assert_allclose(a, b, atol=1e-10)


# --------------------------------------------------------------------- sr


def test_sr_factor_one_collapses_to_input():
    x0 = make_phantom(32, 5)
    cfg = DenoiseConfig(sr_factor=1, sr_steps=20, seed=2)
    out = sr_enhance(x0, GaussianPriorScore(mean=x0, std=0.0), cfg)
    np.testing.assert_array_equal(out, x0)


def test_sr_preserves_block_means_of_input():
    x0 = SrOperator(2).project(make_phantom(32, 6))  # block-constant input
    cfg = DenoiseConfig(sr_factor=2, sr_steps=20, seed=3)
    out = sr_enhance(x0, GaussianPriorScore(mean=x0, std=0.0), cfg)
    op = SrOperator(2)
    np.testing.assert_allclose(op.project(out), op.project(x0), atol=1e-6)


def test_sr_requires_steps_and_divisibility():
    x0 = make_phantom(32, 0)
    with pytest.raises(ValueError):
        sr_enhance(x0, GaussianPriorScore(), DenoiseConfig(sr_steps=0))
    with pytest.raises(ValueError):
        sr_enhance(np.zeros((9, 9)), GaussianPriorScore(), DenoiseConfig(sr_factor=2))


def test_sr_strict_literal_mode_changes_output():
    x0 = make_phantom(32, 8)
    model = GaussianPriorScore(mean=x0, std=0.0)
    a = sr_enhance(x0, model, DenoiseConfig(seed=4))
    b = sr_enhance(x0, model, DenoiseConfig(seed=4, strict_literal_dc=True))
    assert not np.allclose(a, b)


# ------------------------------------------------------------------- plus


def test_plus_identity_when_nothing_to_do():
    x = np.full((64, 64), 0.5)
    out = r2d2_plus(x, GaussianPriorScore(), DenoiseConfig(sr_steps=0))
    np.testing.assert_array_equal(out, x)


def test_plus_deterministic():
    ph = make_phantom(32, 9)
    noisy = ph + 0.1 * NoiseStreams(73).normal(ph.shape, 0)
    cfg = DenoiseConfig(seed=21)
    model = GaussianPriorScore(mean=ph, std=0.0)
    a = r2d2_plus(noisy, model, cfg)
    b = r2d2_plus(noisy, model, cfg)
    np.testing.assert_array_equal(a, b)


def test_plus_skips_sr_when_m_zero():
    ph = make_phantom(32, 10)
    noisy = ph + 0.1 * NoiseStreams(74).normal(ph.shape, 0)
    cfg = DenoiseConfig(sr_steps=0, seed=22)
    model = GaussianPriorScore(mean=ph, std=0.0)
    np.testing.assert_array_equal(
        r2d2_plus(noisy, model, cfg), r2d2_denoise(noisy, model, cfg)
    )


def test_plus_improves_roi_snr():
    from r2d2.metrics import snr

    ph, rois = make_phantom_with_rois(128, 11)
    noisy = ph + (25 / 255) * NoiseStreams(75).normal(ph.shape, 0)
    out = r2d2_plus(noisy, GaussianPriorScore(mean=ph, std=0.0), DenoiseConfig(seed=23))
    assert snr(out, rois["signal"]) > snr(noisy, rois["signal"])


# --------------------------------------------------------------- ensemble


def test_ensemble_k1_std_is_zero():
    ph = make_phantom(32, 12)
    noisy = ph + 0.1 * NoiseStreams(76).normal(ph.shape, 0)
    ens = posterior_ensemble(noisy, GaussianPriorScore(mean=ph, std=0.0), DenoiseConfig(seed=24), 1)
    assert np.all(ens.std_map == 0.0)
    assert len(ens.samples) == 1


def test_ensemble_delta_oracle_collapses_near_truth():
    ph = make_phantom(64, 13)
    noisy = ph + (25 / 255) * NoiseStreams(77).normal(ph.shape, 0)
    cfg = DenoiseConfig(seed=25)
    ens = posterior_ensemble(noisy, GaussianPriorScore(mean=ph, std=0.0), cfg, 5)
    assert float(ens.std_map.mean()) <= 2 * cfg.schedule.sigma_min
    assert len(set(ens.seeds)) == 5


def test_ensemble_threaded_matches_sequential():
    ph = make_phantom(32, 14)
    noisy = ph + 0.1 * NoiseStreams(78).normal(ph.shape, 0)
    cfg = DenoiseConfig(seed=26)
    model = GaussianPriorScore(mean=ph, std=0.0)
    seq = posterior_ensemble(noisy, model, cfg, 4, workers=1)
    par = posterior_ensemble(noisy, model, cfg, 4, workers=4)
    for a, b in zip(seq.samples, par.samples):
        np.testing.assert_array_equal(a, b)


def test_ensemble_size_domain():
    with pytest.raises(ValueError):
        posterior_ensemble(np.zeros((8, 8)), GaussianPriorScore(), DenoiseConfig(), 0)


def test_ensemble_mean_anchors_to_closed_form_posterior():
    # unregularized chain, alpha = 1, corrector off: the K-average of terminal
    # samples approaches the Gaussian posterior mean
    m, s, sigma = 0.5, 0.5, 0.2
    g = NoiseStreams(77)
    x0 = m + s * g.normal((8, 8), 0)
    x = x0 + sigma * g.normal((8, 8), 1)
    cfg = DenoiseConfig(
        alpha=1.0, lam=0.0, sr_steps=0, corrector_in_denoise=False,
        sigma_override=sigma, seed=123,
    )
    ens = posterior_ensemble(x, GaussianPriorScore(mean=m, std=s), cfg, 200)
    post_mean = (s**2 * x + sigma**2 * m) / (s**2 + sigma**2)
    rel = np.linalg.norm(ens.mean_map - post_mean) / np.linalg.norm(post_mean)
    assert rel < 0.05


# ------------------------------------------------------------------ sweep


def test_sweep_n_prime_nondecreasing_and_paired():
    ph = make_phantom(32, 15)
    noisy = ph + 0.1 * NoiseStreams(79).normal(ph.shape, 0)
    cfg = DenoiseConfig(sr_steps=0, seed=27)
    model = GaussianPriorScore(mean=ph, std=0.0)
    entries = sweep_alpha(noisy, model, cfg, alphas=[0.2, 0.4, 0.4, 1.0])
    n_primes = [e.metrics["n_prime"] for e in entries]
    assert n_primes == sorted(n_primes)
    np.testing.assert_array_equal(entries[1].image, entries[2].image)
    assert {e.alpha for e in entries} == {0.2, 0.4, 1.0}


def test_sweep_shares_one_estimate():
    calls = []

    def counting(img):
        calls.append(1)
        from r2d2.estimation import estimate_noise_std

        return estimate_noise_std(img)

    ph = make_phantom(32, 16)
    noisy = ph + 0.1 * NoiseStreams(80).normal(ph.shape, 0)
    cfg = DenoiseConfig(sr_steps=0, seed=28)
    sweep_alpha(noisy, GaussianPriorScore(mean=ph, std=0.0), cfg, alphas=[0.5, 1.0], estimator=counting)
    assert len(calls) == 1


def test_sweep_alpha_domain():
    with pytest.raises(ValueError):
        sweep_alpha(np.zeros((8, 8)), GaussianPriorScore(), DenoiseConfig(), alphas=[0.0])
