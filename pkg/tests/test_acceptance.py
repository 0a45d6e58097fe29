"""Acceptance gate: ten end-to-end criteria with pinned tolerances.

Each criterion is one test that prints a single [PASS]/[FAIL] line with the
measured quantity, its tolerance, and the runtime budget.  Run with -s (or
read the -v test lines) to see them.
"""

import json
import time

import numpy as np

from r2d2.cli import run_command
from r2d2.consistency import SrOperator, build_lowfreq_mask, downup_project, lowfreq_mix, sr_data_consistency
from r2d2.diffusion import NoiseStreams, SamplerSettings, generate, pc_step
from r2d2.estimation import estimate_noise_std
from r2d2.imgio import load_image
from r2d2.metrics import snr
from r2d2.phantoms import make_phantom_with_rois
from r2d2.pipeline import (
    DenoiseConfig,
    plan_steps,
    posterior_ensemble,
    r2d2_plus,
    sweep_alpha,
    tweedie_denoise,
)
from r2d2.schedule import NoiseSchedule
from r2d2.score import GaussianPriorScore, dsm_loss


def _verdict(num, name, ok, detail):
    print(f"criterion {num:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def test_criterion_01_tweedie_exactness():
    """Delta-prior posterior mean is exact: 100 (x0, sigma, z) triples, <= 1e-9."""
    rng = np.random.default_rng(101)
    sched = NoiseSchedule()
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        x0 = rng.uniform(0, 1, (16, 16))
        sigma = float(np.exp(rng.uniform(np.log(sched.sigma_min), np.log(sched.sigma_max))))
        z = rng.standard_normal(x0.shape)
        model = GaussianPriorScore(mean=x0, std=0.0)
        est = tweedie_denoise(x0 + sigma * z, model, sigma)
        worst = max(worst, float(np.max(np.abs(est - x0))))
    dt = time.perf_counter() - t0
    _verdict(1, "Tweedie delta-prior exactness", worst <= 1e-9 and dt < 1.0,
             f"max abs err {worst:.3e} (tol 1e-9), {dt:.2f}s (budget 1s)")


def test_criterion_02_gaussian_posterior_mean():
    """Tweedie with the (m, s) oracle equals (s^2 x + sigma^2 m)/(s^2 + sigma^2)."""
    rng = np.random.default_rng(202)
    sched = NoiseSchedule()
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        m = rng.uniform(0, 1, (12, 12))
        s = float(rng.uniform(0.1, 2.0))
        sigma = float(np.exp(rng.uniform(np.log(sched.sigma_min), np.log(sched.sigma_max))))
        x = rng.uniform(-1, 2, m.shape)
        got = tweedie_denoise(x, GaussianPriorScore(mean=m, std=s), sigma)
        want = (s**2 * x + sigma**2 * m) / (s**2 + sigma**2)
        worst = max(worst, float(np.max(np.abs(got - want))))
    dt = time.perf_counter() - t0
    _verdict(2, "Gaussian posterior mean", worst <= 1e-9 and dt < 1.0,
             f"max abs err {worst:.3e} (tol 1e-9), {dt:.2f}s (budget 1s)")


def test_criterion_03_generation_fidelity():
    """500 scalar samples from the N(mu, s^2) prior: mean within 3 SE, var within 10%."""
    mu, s = 1.3, 0.7
    model = GaussianPriorScore(mean=mu, std=s)
    sched = NoiseSchedule(n_steps=200)
    # Predictor-only: on a 1-pixel grid the corrector step 2(r|z|/|s|)^2 is a
    # single-draw ratio with unbounded variance (|s| can be arbitrarily small),
    # which destroys calibration; the corrector is meaningful on image grids.
    settings = SamplerSettings(corrector_steps=0)
    t0 = time.perf_counter()
    samples = np.array([
        generate(model, sched, settings, (1, 1), seed=k).item() for k in range(500)
    ])
    dt = time.perf_counter() - t0
    mean_err = abs(samples.mean() - mu)
    mean_tol = 3.0 * s / np.sqrt(500)
    var_rel = abs(samples.var() - s**2) / s**2
    ok = mean_err <= mean_tol and var_rel <= 0.10 and dt < 30.0
    _verdict(3, "generation fidelity", ok,
             f"|mean err| {mean_err:.4f} (tol {mean_tol:.4f}), var rel err "
             f"{var_rel:.3f} (tol 0.10), {dt:.1f}s (budget 30s)")


def test_criterion_04_contraction_factor():
    """Shared-noise delta-prior trajectories contract by (1-lambda) sigma_i^2/sigma_{i+1}^2."""
    lam = 0.005
    sched = NoiseSchedule(n_steps=50)
    settings = SamplerSettings(corrector_steps=0)  # the equality is predictor-exact
    rng = np.random.default_rng(404)
    x0 = rng.uniform(0, 1, (32, 32))
    x_ref = x0 + 0.3 * rng.standard_normal(x0.shape)
    model = GaussianPriorScore(mean=x0, std=0.0)
    mask = build_lowfreq_mask(x0.shape, 0.125)
    stream = NoiseStreams(9).scoped(1)
    a = x_ref.copy()
    b = x_ref + 0.05 * rng.standard_normal(x0.shape)
    gap = np.linalg.norm(a - b)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(sched.n_steps - 1, 0, -1):
        # Path-keyed noise: both trajectories draw identical z at level i.
        a = lowfreq_mix(pc_step(a, i, model, settings, sched, stream), x_ref, lam, mask)
        b = lowfreq_mix(pc_step(b, i, model, settings, sched, stream), x_ref, lam, mask)
        new_gap = np.linalg.norm(a - b)
        expected = (1.0 - lam) * sched.sigma_at(i) ** 2 / sched.sigma_at(i + 1) ** 2
        worst = max(worst, abs(new_gap / gap - expected) / expected)
        # The delta-prior step is affine with a scalar linear part, so
        # rescaling the gap is exact; it keeps (a - b) well above the float64
        # cancellation floor after 49 rounds of contraction.
        b = a + (b - a) * (gap / new_gap)
        gap = np.linalg.norm(b - a)
    # Final step lands on the data manifold (sigma_0 = 0): trajectories merge.
    a = lowfreq_mix(pc_step(a, 0, model, settings, sched, stream), x_ref, lam, mask)
    b = lowfreq_mix(pc_step(b, 0, model, settings, sched, stream), x_ref, lam, mask)
    merged = np.max(np.abs(a - b))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and merged <= 1e-8 and dt < 5.0
    _verdict(4, "per-iteration contraction", ok,
             f"max ratio rel dev {worst:.3e} (tol 1e-8), final gap {merged:.3e}, "
             f"{dt:.2f}s (budget 5s)")


def test_criterion_05_non_expansiveness():
    """Mix Lipschitz = (1-lambda) to 1e-12; down-up idempotent/self-adjoint to
    1e-10; SR data consistency non-expansive on 1000 pairs."""
    rng = np.random.default_rng(505)
    t0 = time.perf_counter()
    worst_mix = 0.0
    for lam in (0.0, 0.005, 0.3, 1.0):
        mask = build_lowfreq_mask((24, 24), 0.2)
        for _ in range(50):
            x, y, ref = (rng.standard_normal((24, 24)) for _ in range(3))
            num = np.linalg.norm(lowfreq_mix(x, ref, lam, mask) - lowfreq_mix(y, ref, lam, mask))
            den = np.linalg.norm(x - y)
            worst_mix = max(worst_mix, abs(num / den - (1.0 - lam)))
    worst_idem, worst_adj = 0.0, 0.0
    for _ in range(50):
        x = rng.standard_normal((24, 24))
        y = rng.standard_normal((24, 24))
        px = downup_project(x, 2)
        worst_idem = max(worst_idem, float(np.max(np.abs(downup_project(px, 2) - px))))
        worst_adj = max(worst_adj, abs(float(np.sum(px * y) - np.sum(x * downup_project(y, 2)))))
    op = SrOperator(2)
    x0 = rng.uniform(0, 1, (16, 16))
    expansion = 0.0
    for _ in range(1000):
        x = rng.standard_normal((16, 16))
        y = rng.standard_normal((16, 16))
        num = np.linalg.norm(sr_data_consistency(x, x0, op) - sr_data_consistency(y, x0, op))
        expansion = max(expansion, num / np.linalg.norm(x - y))
    dt = time.perf_counter() - t0
    ok = worst_mix <= 1e-12 and worst_idem <= 1e-10 and worst_adj <= 1e-10 \
        and expansion <= 1.0 + 1e-12 and dt < 10.0
    _verdict(5, "non-expansiveness equalities", ok,
             f"mix dev {worst_mix:.2e} (tol 1e-12), idem {worst_idem:.2e} / adj "
             f"{worst_adj:.2e} (tol 1e-10), DC expansion {expansion:.12f} (<= 1), "
             f"{dt:.1f}s (budget 10s)")


def test_criterion_06_noise_estimation_corpus():
    """10 phantoms x sigma in {5,15,25,50}/255: rel err <= 10% (15% at 5/255),
    estimates strictly monotone in true sigma."""
    sigmas = np.array([5.0, 15.0, 25.0, 50.0]) / 255.0
    t0 = time.perf_counter()
    worst = {s: 0.0 for s in sigmas}
    monotone = True
    for p in range(10):
        clean, _ = make_phantom_with_rois(size=128, seed=p)
        rng = np.random.default_rng(1000 + p)
        estimates = []
        for s in sigmas:
            noisy = clean + s * rng.standard_normal(clean.shape)
            est = estimate_noise_std(noisy).sigma_est
            estimates.append(est)
            worst[s] = max(worst[s], abs(est - s) / s)
        monotone &= all(a < b for a, b in zip(estimates, estimates[1:]))
    dt = time.perf_counter() - t0
    tol_ok = worst[sigmas[0]] <= 0.15 and all(worst[s] <= 0.10 for s in sigmas[1:])
    ok = tol_ok and monotone and dt < 60.0
    detail = ", ".join(f"{s * 255:.0f}/255: {worst[s] * 100:.1f}%" for s in sigmas)
    _verdict(6, "noise estimation corpus", ok,
             f"worst rel err {detail} (tol 15%/10%), monotone={monotone}, "
             f"{dt:.1f}s (budget 60s)")


def test_criterion_07_end_to_end_desk_scale():
    """20 seeded 128^2 trials at sigma=25/255: ROI SNR improves in >= 18, RMS
    error vs the clean phantom decreases in all."""
    sigma = 25.0 / 255.0
    cfg_base = DenoiseConfig(alpha=0.2, lam=0.005, sr_factor=2, sr_steps=20)
    t0 = time.perf_counter()
    snr_wins, rms_wins = 0, 0
    for trial in range(20):
        clean, rois = make_phantom_with_rois(size=128, seed=trial)
        rng = np.random.default_rng(5000 + trial)
        noisy = clean + sigma * rng.standard_normal(clean.shape)
        model = GaussianPriorScore(mean=clean, std=0.0)
        cfg = DenoiseConfig(
            alpha=cfg_base.alpha, lam=cfg_base.lam, sr_factor=cfg_base.sr_factor,
            sr_steps=cfg_base.sr_steps, seed=trial,
        )
        out = r2d2_plus(noisy, model, cfg)
        roi = rois["signal"]
        snr_wins += snr(out, roi) > snr(noisy, roi)
        rms = lambda img: float(np.sqrt(np.mean((img - clean) ** 2)))
        rms_wins += rms(out) < rms(noisy)
    dt = time.perf_counter() - t0
    ok = snr_wins >= 18 and rms_wins == 20 and dt < 300.0
    _verdict(7, "end-to-end denoising + SR", ok,
             f"SNR improved {snr_wins}/20 (need >= 18), RMS decreased {rms_wins}/20 "
             f"(need 20), {dt:.1f}s (budget 300s)")


def test_criterion_08_alpha_sweep_planning():
    """N'(alpha) nondecreasing over 0.2..1.0; the sweep is deterministic per seed."""
    clean, _ = make_phantom_with_rois(size=64, seed=3)
    rng = np.random.default_rng(8)
    noisy = clean + 0.1 * rng.standard_normal(clean.shape)
    model = GaussianPriorScore(mean=clean, std=0.0)
    cfg = DenoiseConfig(seed=21, sr_steps=10)
    t0 = time.perf_counter()
    first = sweep_alpha(noisy, model, cfg)
    second = sweep_alpha(noisy, model, cfg)
    dt = time.perf_counter() - t0
    n_primes = [e.metrics["n_prime"] for e in first]
    nondecreasing = all(a <= b for a, b in zip(n_primes, n_primes[1:]))
    identical = all(
        np.array_equal(a.image, b.image) and a.metrics == b.metrics
        for a, b in zip(first, second)
    )
    ok = nondecreasing and identical and dt < 60.0
    _verdict(8, "alpha-sweep planning", ok,
             f"N' grid {n_primes} nondecreasing={nondecreasing}, reruns "
             f"identical={identical}, {dt:.1f}s (budget 60s)")


def test_criterion_09_uncertainty_reproducibility(tmp_path, monkeypatch):
    """K=1 std map is exactly zero; a K=5 ensemble regenerates byte-exactly
    from the seeds recorded in the run report."""
    monkeypatch.chdir(tmp_path)
    clean, _ = make_phantom_with_rois(size=64, seed=4)
    rng = np.random.default_rng(9)
    noisy = clean + 0.1 * rng.standard_normal(clean.shape)
    cfg = DenoiseConfig(seed=33, sr_steps=10, schedule=NoiseSchedule(n_steps=300))
    t0 = time.perf_counter()
    single = posterior_ensemble(noisy, GaussianPriorScore(mean=clean, std=0.0), cfg, 1)
    zero_std = bool(np.all(single.std_map == 0.0))
    from r2d2.imgio import save_image

    save_image(clean, "clean.raw")
    save_image(noisy, "noisy.raw")
    rc = run_command([
        "uncertainty", "noisy.raw", "--samples", "5", "--seed", "33",
        "--n-steps", "300", "--sr-steps", "10",
        "--score-mean", "clean.raw", "--score-std", "0", "--out-dir", "o",
    ])
    report = json.load(open("o/report.json"))
    # Re-execute from the report exactly as the CLI saw the data: through the
    # float32 image files.
    noisy_f32 = load_image("noisy.raw")
    model = GaussianPriorScore(mean=load_image("clean.raw"), std=0.0)
    byte_exact = rc == 0
    for j, seed in enumerate(report["results"]["seeds"]):
        redo = r2d2_plus(noisy_f32, model, cfg, NoiseStreams(seed))
        save_image(redo, "redo.raw")
        byte_exact &= open("redo.raw", "rb").read() == open(f"o/sample_{j:02d}.raw", "rb").read()
    dt = time.perf_counter() - t0
    ok = zero_std and byte_exact and dt < 120.0
    _verdict(9, "uncertainty ensembles", ok,
             f"K=1 std identically zero={zero_std}, K=5 byte-exact from report "
             f"seeds={byte_exact}, {dt:.1f}s (budget 120s)")


def test_criterion_10_dsm_loss_floor():
    """Exact delta-prior score beats 20 perturbed score variants on 500 draws."""
    rng = np.random.default_rng(1010)
    x0, _ = make_phantom_with_rois(size=32, seed=6)
    sched = NoiseSchedule()
    exact = GaussianPriorScore(mean=x0, std=0.0)

    def offset(c):
        return lambda x, s: exact(x, s) + c

    def scaled(g):
        return lambda x, s: g * exact(x, s)

    def field(seed, amp):
        bump = amp * np.random.default_rng(seed).standard_normal(x0.shape)
        return lambda x, s: exact(x, s) + bump

    variants = (
        [offset(c) for c in (0.01, -0.01, 0.1, -0.1, 1.0, -1.0)]
        + [scaled(g) for g in (0.5, 0.9, 1.1, 1.5)]
        + [GaussianPriorScore(mean=x0 + c, std=0.0) for c in (0.05, -0.05, 0.2, -0.2)]
        + [GaussianPriorScore(mean=x0, std=s) for s in (0.1, 0.5)]
        + [field(k, a) for k, a in ((1, 0.01), (2, 0.1), (3, 0.5), (4, 1.0))]
    )
    assert len(variants) == 20
    draws = [
        (float(rng.uniform(sched.epsilon, 1.0)), rng.standard_normal(x0.shape))
        for _ in range(500)
    ]
    t0 = time.perf_counter()
    exact_loss = float(np.mean([dsm_loss(exact, x0, sched, t, z) for t, z in draws]))
    margins = []
    for v in variants:
        loss = float(np.mean([dsm_loss(v, x0, sched, t, z) for t, z in draws]))
        margins.append(loss - exact_loss)
    dt = time.perf_counter() - t0
    ok = all(m > 0 for m in margins) and dt < 30.0
    _verdict(10, "DSM loss floor", ok,
             f"exact mean loss {exact_loss:.3e}, min variant margin "
             f"{min(margins):.3e} > 0, beats 20/20, {dt:.1f}s (budget 30s)")
