"""Command-line surface: estimation, denoising, SR, sweeps, uncertainty,
generation, and ROI metrics over raw/PNG images.

Every run writes a RunReport JSON carrying the full effective configuration
(enough to re-execute the run bit-identically), the step plan, result
summaries, output paths, and wall-clock timings as the final key.  Timings
are the one nondeterministic field; compare reports modulo "timings".
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time

import numpy as np

from .diffusion import NoiseStreams, SamplerSettings, generate
from .imgio import ImageIOError, atomic_write, load_image, save_image
from .metrics import cnr, roi_from_json, roi_to_json, snr
from .pipeline import (
    DEFAULT_ALPHA_GRID,
    DenoiseConfig,
    plan_steps,
    posterior_ensemble,
    r2d2_denoise,
    sr_enhance,
    sweep_alpha,
    tweedie_denoise,
)
from .schedule import NoiseSchedule
from .score import GaussianPriorScore, GmmComponent, GmmPriorScore, RemoteScore

SCORE_ADDR_ENV = "R2D2_SCORE_ADDR"


class UsageError(Exception):
    """Bad flags, config keys, or option values; exits with status 2."""


def _bool_from_str(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


# name -> (caster for config-file strings, default)
_OPTIONS = {
    "alpha": (float, 0.2),
    "lam": (float, 0.005),
    "omega_fraction": (float, 0.125),
    "n_steps": (int, 1000),
    "sigma_min": (float, 0.01),
    "sigma_max": (float, 378.0),
    "epsilon": (float, 1e-5),
    "corrector_steps": (int, 1),
    "corrector_snr": (float, 0.16),
    "corrector_in_denoise": (_bool_from_str, True),
    "corrector_in_sr": (_bool_from_str, True),
    "strict_literal_dc": (_bool_from_str, False),
    "sr_factor": (int, 2),
    "sr_steps": (int, 20),
    "samples": (int, 5),
    "seed": (int, 0),
    "sigma": (float, None),
    "score": (str, "gaussian"),
    "score_mean": (str, "0.5"),
    "score_std": (float, 0.3),
    "score_gmm": (str, None),
    "workers": (int, 1),
    "sample_std": (_bool_from_str, False),
    "paired": (_bool_from_str, False),
    "alphas": (str, ",".join(f"{a:g}" for a in DEFAULT_ALPHA_GRID)),
    "shape": (str, "64x64"),
    "out_dir": (str, "r2d2_out"),
    "report": (str, None),
}

_CONFIG_ALIASES = {"lambda": "lam"}


def _parse_config_file(path: str) -> dict:
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        key = _CONFIG_ALIASES.get(key, key)
        if key not in _OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value.strip()
    return out


def _resolve(args: argparse.Namespace) -> dict:
    """Effective options with precedence flag > config file > default."""
    config = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    opts = {}
    for name, (cast, default) in _OPTIONS.items():
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            opts[name] = flag_value
        elif name in config:
            try:
                opts[name] = cast(config[name])
            except ValueError as exc:
                raise UsageError(f"config key {name}: {exc}") from exc
        else:
            opts[name] = default
    return opts


def _pipeline_config(opts: dict, sr_steps: int | None = None) -> DenoiseConfig:
    try:
        return DenoiseConfig(
            alpha=opts["alpha"],
            lam=opts["lam"],
            omega_fraction=opts["omega_fraction"],
            sr_factor=opts["sr_factor"],
            sr_steps=opts["sr_steps"] if sr_steps is None else sr_steps,
            sampler=SamplerSettings(
                corrector_steps=opts["corrector_steps"],
                corrector_snr=opts["corrector_snr"],
            ),
            schedule=NoiseSchedule(
                sigma_min=opts["sigma_min"],
                sigma_max=opts["sigma_max"],
                n_steps=opts["n_steps"],
                epsilon=opts["epsilon"],
            ),
            seed=opts["seed"],
            sigma_override=opts["sigma"],
            strict_literal_dc=opts["strict_literal_dc"],
            corrector_in_denoise=opts["corrector_in_denoise"],
            corrector_in_sr=opts["corrector_in_sr"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _mean_from_text(text: str):
    try:
        return float(text)
    except ValueError:
        return load_image(text)


def _make_model(opts: dict, shape: tuple[int, int], stack: contextlib.ExitStack):
    kind = opts["score"]
    if kind == "remote" or kind.startswith("remote:"):
        addr = os.environ.get(SCORE_ADDR_ENV) or (
            kind.split(":", 1)[1] if ":" in kind else ""
        )
        if not addr:
            raise UsageError("remote score needs remote:<addr> or " + SCORE_ADDR_ENV)
        opts["score"] = f"remote:{addr}"
        return stack.enter_context(RemoteScore(addr, shape))
    if kind == "gaussian":
        return GaussianPriorScore(mean=_mean_from_text(opts["score_mean"]), std=opts["score_std"])
    if kind == "gmm":
        if not opts["score_gmm"]:
            raise UsageError("gmm score needs --score-gmm <json>")
        try:
            entries = json.load(open(opts["score_gmm"]))
        except OSError as exc:
            raise UsageError(f"cannot read {opts['score_gmm']}: {exc.strerror or exc}") from exc
        components = [
            GmmComponent(
                weight=float(e["weight"]),
                mean=_mean_from_text(str(e["mean"])),
                std=float(e["std"]),
            )
            for e in entries
        ]
        return GmmPriorScore(components)
    raise UsageError(f"unknown score kind {kind!r} (gaussian, gmm, or remote:<addr>)")


def _config_echo(opts: dict) -> dict:
    echo = {}
    for name in _OPTIONS:
        echo["lambda" if name == "lam" else name] = opts[name]
    return echo


def _report_path(opts: dict) -> str:
    return opts["report"] or os.path.join(opts["out_dir"], "report.json")


def _finish(command, args, opts, plan, results, outputs, timings, stdout_extra=None):
    """Assemble the RunReport in fixed field order, write it, print a summary."""
    report = {
        "command": command,
        "inputs": {"image": getattr(args, "input", None)},
        "config": _config_echo(opts),
        "plan": plan,
        "results": results,
        "outputs": outputs,
        "timings": {k: round(v, 6) for k, v in timings.items()},
    }
    path = _report_path(opts)
    atomic_write(path, (json.dumps(report, indent=2) + "\n").encode())
    summary = {"command": command, "report": path}
    summary.update(results if stdout_extra is None else stdout_extra)
    print(json.dumps(summary))


def _plan_dict(plan) -> dict:
    out = {
        "sigma_est": plan.sigma_est,
        "t_prime": plan.t_prime,
        "n_prime": plan.n_prime,
        "clamped": plan.clamped,
    }
    if plan.estimate is not None:
        out["n_patches_used"] = plan.estimate.n_patches_used
        out["estimator_converged"] = plan.estimate.converged
    return out


def _save_pair(img, out_dir: str, stem: str, outputs: dict):
    raw_path = os.path.join(out_dir, stem + ".raw")
    png_path = os.path.join(out_dir, stem + ".png")
    save_image(img, raw_path)
    save_image(img, png_path)
    outputs[stem + "_raw"] = raw_path
    outputs[stem + "_png"] = png_path


def _rms(a, b) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _cmd_estimate_noise(args):
    opts = _resolve(args)
    os.makedirs(opts["out_dir"], exist_ok=True)
    img = load_image(args.input)
    t0 = time.perf_counter()
    plan = plan_steps(img, _pipeline_config(opts))
    t_est = time.perf_counter() - t0
    _finish(
        "estimate-noise",
        args,
        opts,
        _plan_dict(plan),
        {"sigma_est": plan.sigma_est, "t_prime": plan.t_prime, "n_prime": plan.n_prime},
        {},
        {"estimate_s": t_est, "total_s": t_est},
    )


def _denoise_common(args, with_sr: bool):
    opts = _resolve(args)
    os.makedirs(opts["out_dir"], exist_ok=True)
    img = load_image(args.input)
    cfg = _pipeline_config(opts, sr_steps=None if with_sr else 0)
    with contextlib.ExitStack() as stack:
        model = _make_model(opts, img.shape, stack)
        t0 = time.perf_counter()
        plan = plan_steps(img, cfg)
        t_est = time.perf_counter() - t0
        streams = NoiseStreams(cfg.seed)
        t1 = time.perf_counter()
        denoised = r2d2_denoise(img, model, cfg, streams, plan=plan)
        t_den = time.perf_counter() - t1
        outputs = {}
        _save_pair(denoised, opts["out_dir"], "denoised", outputs)
        results = {
            "sigma_est": plan.sigma_est,
            "n_prime": plan.n_prime,
            "rms_change_from_input": _rms(denoised, img),
        }
        timings = {"estimate_s": t_est, "denoise_s": t_den}
        command = "denoise"
        if with_sr:
            command = "denoise-sr"
            t2 = time.perf_counter()
            final = sr_enhance(denoised, model, cfg, streams) if cfg.sr_steps >= 1 else denoised
            timings["sr_s"] = time.perf_counter() - t2
            _save_pair(final, opts["out_dir"], "denoised_sr", outputs)
            results["rms_change_from_denoised"] = _rms(final, denoised)
        timings["total_s"] = time.perf_counter() - t0
        _finish(command, args, opts, _plan_dict(plan), results, outputs, timings)


def _cmd_denoise(args):
    _denoise_common(args, with_sr=False)


def _cmd_denoise_sr(args):
    _denoise_common(args, with_sr=True)


def _cmd_sweep_alpha(args):
    opts = _resolve(args)
    os.makedirs(opts["out_dir"], exist_ok=True)
    img = load_image(args.input)
    cfg = _pipeline_config(opts)
    try:
        grid = [float(a) for a in opts["alphas"].split(",") if a.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --alphas: {exc}") from exc
    if not grid:
        raise UsageError("empty alpha grid")
    with contextlib.ExitStack() as stack:
        model = _make_model(opts, img.shape, stack)
        t0 = time.perf_counter()
        plan = plan_steps(img, cfg)
        t_est = time.perf_counter() - t0
        # Reuse the single estimate across the grid instead of re-estimating.
        estimator = None if plan.estimate is None else (lambda _img: plan.estimate)
        t1 = time.perf_counter()
        entries = sweep_alpha(img, model, cfg, grid, estimator)
        t_sweep = time.perf_counter() - t1
    outputs = {}
    per_alpha = []
    for entry in entries:
        stem = f"alpha_{entry.alpha:g}"
        _save_pair(entry.image, opts["out_dir"], stem, outputs)
        per_alpha.append({"alpha": entry.alpha, **entry.metrics})
    _finish(
        "sweep-alpha",
        args,
        opts,
        _plan_dict(plan),
        {"entries": per_alpha},
        outputs,
        {"estimate_s": t_est, "sweep_s": t_sweep, "total_s": t_est + t_sweep},
        stdout_extra={"n_primes": [e.metrics["n_prime"] for e in entries]},
    )


def _cmd_uncertainty(args):
    opts = _resolve(args)
    os.makedirs(opts["out_dir"], exist_ok=True)
    img = load_image(args.input)
    cfg = _pipeline_config(opts)
    k = opts["samples"]
    with contextlib.ExitStack() as stack:
        model = _make_model(opts, img.shape, stack)
        t0 = time.perf_counter()
        plan = plan_steps(img, cfg)
        t_est = time.perf_counter() - t0
        t1 = time.perf_counter()
        ens = posterior_ensemble(img, model, cfg, k, plan=plan, workers=opts["workers"])
        t_ens = time.perf_counter() - t1
    outputs = {}
    _save_pair(ens.mean_map, opts["out_dir"], "mean", outputs)
    std_raw = os.path.join(opts["out_dir"], "std.raw")
    save_image(ens.std_map, std_raw)
    outputs["std_raw"] = std_raw
    # The PNG view is normalized by the max std; the scale lives in results.
    scale = float(ens.std_map.max())
    std_png = os.path.join(opts["out_dir"], "std.png")
    save_image(ens.std_map / scale if scale > 0 else ens.std_map, std_png)
    outputs["std_png"] = std_png
    for j, sample in enumerate(ens.samples):
        path = os.path.join(opts["out_dir"], f"sample_{j:02d}.raw")
        save_image(sample, path)
        outputs[f"sample_{j:02d}"] = path
    results = {
        "samples": k,
        "seeds": list(ens.seeds),
        "std_scale": scale,
        "std_mean": float(ens.std_map.mean()),
    }
    _finish(
        "uncertainty",
        args,
        opts,
        _plan_dict(plan),
        results,
        outputs,
        {"estimate_s": t_est, "ensemble_s": t_ens, "total_s": t_est + t_ens},
        stdout_extra={"samples": k, "std_scale": scale},
    )


def _cmd_generate(args):
    opts = _resolve(args)
    os.makedirs(opts["out_dir"], exist_ok=True)
    try:
        rows, cols = (int(v) for v in opts["shape"].lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"bad --shape, expected ROWSxCOLS: {opts['shape']!r}") from exc
    cfg = _pipeline_config(opts)
    with contextlib.ExitStack() as stack:
        model = _make_model(opts, (rows, cols), stack)
        t0 = time.perf_counter()
        img = generate(model, cfg.schedule, cfg.sampler, (rows, cols), cfg.seed)
        t_gen = time.perf_counter() - t0
    outputs = {}
    _save_pair(img, opts["out_dir"], "generated", outputs)
    results = {"shape": [rows, cols], "mean": float(img.mean()), "std": float(img.std())}
    _finish(
        "generate",
        args,
        opts,
        None,
        results,
        outputs,
        {"generate_s": t_gen, "total_s": t_gen},
    )


def _cmd_metrics(args):
    opts = _resolve(args)
    os.makedirs(opts["out_dir"], exist_ok=True)
    img = load_image(args.input)
    try:
        entries = json.load(open(args.rois))
    except OSError as exc:
        raise UsageError(f"cannot read {args.rois}: {exc.strerror or exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise UsageError("ROI file must hold a non-empty JSON list")
    rois = [roi_from_json(e) for e in entries]
    t0 = time.perf_counter()
    per_roi = []
    for roi in rois:
        per_roi.append({**roi_to_json(roi), "snr": snr(img, roi, sample_std=opts["sample_std"])})
    pairs = []
    for i, s in enumerate(rois):
        for j, b in enumerate(rois):
            if s.kind == "signal" and b.kind == "background":
                value = cnr(img, s, b, paired=opts["paired"], sample_std=opts["sample_std"])
                pairs.append({"signal": i, "background": j, "cnr": value})
    t_total = time.perf_counter() - t0
    results = {
        "rois": per_roi,
        "cnr_pairs": pairs,
        "cnr_mean": float(np.mean([p["cnr"] for p in pairs])) if pairs else None,
    }
    _finish("metrics", args, opts, None, results, {}, {"total_s": t_total})


def _cmd_tweedie(args):
    opts = _resolve(args)
    if opts["sigma"] is None:
        raise UsageError("tweedie needs --sigma")
    os.makedirs(opts["out_dir"], exist_ok=True)
    img = load_image(args.input)
    with contextlib.ExitStack() as stack:
        model = _make_model(opts, img.shape, stack)
        t0 = time.perf_counter()
        out = tweedie_denoise(img, model, opts["sigma"])
        t_total = time.perf_counter() - t0
    outputs = {}
    _save_pair(out, opts["out_dir"], "tweedie", outputs)
    results = {"sigma": opts["sigma"], "rms_change_from_input": _rms(out, img)}
    _finish("tweedie", args, opts, None, results, outputs, {"total_s": t_total})


_HANDLERS = {
    "estimate-noise": _cmd_estimate_noise,
    "denoise": _cmd_denoise,
    "denoise-sr": _cmd_denoise_sr,
    "sweep-alpha": _cmd_sweep_alpha,
    "uncertainty": _cmd_uncertainty,
    "generate": _cmd_generate,
    "metrics": _cmd_metrics,
    "tweedie": _cmd_tweedie,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config")
    common.add_argument("--alpha", type=float)
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--n-steps", dest="n_steps", type=int)
    common.add_argument("--sr-factor", dest="sr_factor", type=int)
    common.add_argument("--sr-steps", dest="sr_steps", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--sigma", type=float)
    common.add_argument("--score")
    common.add_argument("--score-mean", dest="score_mean")
    common.add_argument("--score-std", dest="score_std", type=float)
    common.add_argument("--score-gmm", dest="score_gmm")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--report")
    parser = _Parser(prog="r2d2", allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("estimate-noise", "denoise", "denoise-sr", "sweep-alpha", "uncertainty", "metrics", "tweedie"):
        p = sub.add_parser(name, parents=[common], allow_abbrev=False)
        p.add_argument("input")
        if name == "sweep-alpha":
            p.add_argument("--alphas")
        if name == "metrics":
            p.add_argument("--rois", required=True)
            p.add_argument("--paired", action="store_true", default=None)
            p.add_argument("--sample-std", dest="sample_std", action="store_true", default=None)
    gen = sub.add_parser("generate", parents=[common], allow_abbrev=False)
    gen.add_argument("--shape")
    return parser


def run_command(argv) -> int:
    try:
        args = _build_parser().parse_args(argv)
        _HANDLERS[args.command](args)
        return 0
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except SystemExit:
        raise
    except Exception as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
