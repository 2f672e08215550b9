"""Command-line interface: restore, sweep, verify.

Config resolution is defaults < config file < flags; every run writes the
fully resolved config next to its outputs. All randomness derives from the
seed through counter-based streams, so reruns are byte-identical regardless
of the worker count in DDRM_THREADS.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import re
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import imaging, linops, sampler
from .denoiser import BridgeDenoiser, GaussianDenoiser, GmmDenoiser
from .imaging import ImageTensor
from .schedule import SigmaSchedule

DEFAULT_ETA_GRID = (0.7, 0.8, 0.9, 1.0)
DEFAULT_ETAB_GRID = (0.7, 0.8, 0.9, 1.0)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run options; field names mirror the CLI flags."""

    deg: str = "denoise"
    sigma_y: float = 0.0
    eta: float = 0.85
    etab: str = "1.0"
    steps: int = 20
    seed: int = 0
    samples: int = 1
    denoiser: str = "gaussian"
    tau: float = 0.5
    mu: float = 0.5
    gmm_file: str = ""
    bridge_cmd: str = ""
    class_label: str = ""
    sv_threshold: float = 0.0
    mask: str = ""
    schedule_file: str = ""
    outdir: str = "out"
    std_scale: float = 4.0

    def eta_b_value(self) -> float | str:
        if self.etab.strip() == "theorem":
            return "theorem"
        try:
            return float(self.etab)
        except ValueError:
            raise ValueError(f"etab must be a number or 'theorem', got {self.etab!r}")

    def label_value(self) -> int | None:
        return int(self.class_label) if self.class_label.strip() else None

    def validate(self) -> None:
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        if self.sigma_y < 0:
            raise ValueError("sigma-y must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.sv_threshold < 0:
            raise ValueError("sv-threshold must be >= 0")
        if self.denoiser not in ("gaussian", "gmm", "external"):
            raise ValueError("denoiser must be gaussian, gmm, or external")
        if self.denoiser == "gmm" and not self.gmm_file:
            raise ValueError("denoiser gmm requires --gmm-file")
        if self.denoiser == "external" and not self.bridge_cmd:
            raise ValueError("denoiser external requires --bridge-cmd")
        self.eta_b_value()
        self.label_value()

    def to_flat(self) -> dict:
        out = {}
        for f in fields(self):
            out[f.name] = getattr(self, f.name)
        return out


def _parse_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; keys mirror flag names."""
    valid = {f.name for f in fields(RunConfig)}
    casts = {f.name: f.type for f in fields(RunConfig)}
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line is not key=value: {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key == "inputs":
            continue  # provenance-only line in resolved configs
        if key not in valid:
            raise ValueError(f"unknown config key {key!r}")
        if casts[key] == "float":
            out[key] = float(value)
        elif casts[key] == "int":
            out[key] = int(value)
        else:
            out[key] = value
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults -> config file -> explicit flags, validated."""
    values = {}
    if getattr(args, "config", None):
        values.update(_parse_config_file(args.config))
    for f in fields(RunConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            values[f.name] = flag_val
    cfg = replace(RunConfig(), **values)
    cfg.validate()
    return cfg


def write_resolved_config(cfg: RunConfig, outdir: Path, inputs: list[str]) -> None:
    lines = [f"{k}={v}" for k, v in cfg.to_flat().items()]
    lines.append("inputs=" + ",".join(inputs))
    (outdir / "config.resolved.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _gaussian_kernel(sigma: float, d: int) -> np.ndarray:
    length = 2 * math.ceil(3.0 * sigma) + 1
    if length > d:
        length = d if d % 2 else d - 1
    u = np.arange(length) - (length - 1) / 2.0
    k = np.exp(-(u * u) / (2.0 * sigma * sigma))
    return k / k.sum()


def _load_pixel_mask(path, height: int, width: int) -> np.ndarray:
    """Kept pixel indices from a mask image where nonzero bytes mark drops."""
    mask_img = imaging.load_image(path)
    if (mask_img.height, mask_img.width) != (height, width):
        raise ValueError("mask size does not match the input image")
    flat = imaging.to_bytes(mask_img).reshape(mask_img.channels, -1).max(axis=0)
    return np.flatnonzero(flat == 0)


def _expand_pixel_mask(kept_pixels: np.ndarray, channels: int, hw: int) -> np.ndarray:
    return (np.arange(channels)[:, None] * hw + kept_pixels[None, :]).ravel()


def build_preset(cfg: RunConfig, side: int, channels: int,
                 rng_degrade: np.random.Generator) -> linops.SvdOperator:
    """Instantiate the degradation named by cfg.deg for a square image."""
    name = cfg.deg
    if name == "denoise":
        return linops.build_denoising(side, channels)
    if name == "color":
        return linops.build_colorization(side, channels)
    sr = re.fullmatch(r"sr(\d+)", name)
    if sr:
        return linops.build_block_sr(side, int(sr.group(1)), channels)
    bic = re.fullmatch(r"bicubic_sr(\d+)", name)
    if bic:
        return linops.build_bicubic_sr(side, int(bic.group(1)), channels)
    if name == "deblur_uni":
        k = np.full(9, 1.0 / 9.0)
        return linops.build_sep_blur(side, channels, k, k, cfg.sv_threshold)
    if name == "deblur_aniso":
        horizontal = _gaussian_kernel(20.0, side)
        vertical = _gaussian_kernel(1.0, side)
        return linops.build_sep_blur(side, channels, horizontal, vertical, cfg.sv_threshold)
    if name == "inpaint":
        if not cfg.mask:
            raise ValueError("preset inpaint requires --mask")
        kept_pixels = _load_pixel_mask(cfg.mask, side, side)
        return linops.build_inpainting(
            side, channels, _expand_pixel_mask(kept_pixels, channels, side * side))
    if name == "inpaint_rand50":
        hw = side * side
        kept_pixels = np.sort(rng_degrade.permutation(hw)[: hw // 2])
        return linops.build_inpainting(
            side, channels, _expand_pixel_mask(kept_pixels, channels, hw))
    raise ValueError(f"unknown degradation preset {name!r}")


def load_schedule(cfg: RunConfig) -> SigmaSchedule:
    if cfg.schedule_file:
        return SigmaSchedule.load(cfg.schedule_file)
    return SigmaSchedule.linear_beta()


def _worker_count(samples: int) -> int:
    raw = os.environ.get("DDRM_THREADS", "").strip()
    if raw:
        count = int(raw)
        if count < 1:
            raise ValueError("DDRM_THREADS must be a positive integer")
        return count
    return min(4, samples)


class RestoreResult:
    def __init__(self):
        self.images: dict[str, ImageTensor] = {}
        self.metrics: dict[str, float] = {}


def restore_image(x_img: ImageTensor, cfg: RunConfig, schedule: SigmaSchedule,
                  timesteps: tuple[int, ...]) -> RestoreResult:
    """Degrade one image per the config, then sample `samples` restorations."""
    if x_img.height != x_img.width:
        raise ValueError("presets operate on square images")
    side, channels = x_img.height, x_img.channels
    rng_degrade = sampler.make_rng(cfg.seed, sampler.STREAM_DEGRADE)
    op = build_preset(cfg, side, channels, rng_degrade)
    y = imaging.degrade(x_img, op, cfg.sigma_y, rng_degrade)
    problem = sampler.ProblemInstance(op, y, cfg.sigma_y)
    params = sampler.DdrmParams(
        timesteps=timesteps, eta=cfg.eta, eta_b=cfg.eta_b_value(), seed=cfg.seed)
    label = cfg.label_value()

    den = _make_denoiser(cfg, problem.n, channels, side)

    def run_sample(k: int) -> np.ndarray:
        rng = sampler.make_rng(cfg.seed ^ k, sampler.STREAM_CHAIN)
        return sampler.run(problem, den, schedule, params, rng, label=label)

    try:
        if cfg.denoiser == "external":
            # the bridge is strictly serial: one server, samples in order
            vecs = [run_sample(k) for k in range(cfg.samples)]
        else:
            workers = _worker_count(cfg.samples)
            if workers == 1 or cfg.samples == 1:
                vecs = [run_sample(k) for k in range(cfg.samples)]
            else:
                with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                    vecs = list(pool.map(run_sample, range(cfg.samples)))
    finally:
        closer = getattr(den, "close", None)
        if closer:
            closer()

    result = RestoreResult()
    shape = (channels, side, side)
    result.images["orig"] = x_img
    baseline = ImageTensor(op.pseudo_inverse(y).reshape(shape))
    result.images["degraded"] = baseline
    restored = [ImageTensor(v.reshape(shape)) for v in vecs]
    for k, img in enumerate(restored):
        result.images[f"sample_{k}"] = img
    mean_img = restored[0]
    if cfg.samples > 1:
        mean_img, std_img = imaging.aggregate(restored, cfg.std_scale)
        result.images["mean"] = mean_img
        result.images["std"] = std_img

    ssim_ok = side >= imaging.SSIM_WINDOW
    ref = x_img.data
    result.metrics["baseline_psnr"] = imaging.psnr(baseline.data, ref)
    if ssim_ok:
        result.metrics["baseline_ssim"] = imaging.ssim(baseline.data, ref)
    sample_psnrs = []
    for k, img in enumerate(restored):
        p = imaging.psnr(img.data, ref)
        sample_psnrs.append(p)
        result.metrics[f"sample_{k}_psnr"] = p
        if ssim_ok:
            result.metrics[f"sample_{k}_ssim"] = imaging.ssim(img.data, ref)
    result.metrics["psnr_mean"] = float(np.mean(sample_psnrs))
    result.metrics["psnr_std"] = float(np.std(sample_psnrs, ddof=1)) if len(sample_psnrs) > 1 else 0.0
    if cfg.samples > 1:
        result.metrics["mean_psnr"] = imaging.psnr(mean_img.data, ref)
        if ssim_ok:
            result.metrics["mean_ssim"] = imaging.ssim(mean_img.data, ref)
    return result


def _make_denoiser(cfg: RunConfig, n: int, channels: int, side: int):
    if cfg.denoiser == "gaussian":
        return GaussianDenoiser(cfg.mu, cfg.tau)
    if cfg.denoiser == "gmm":
        return GmmDenoiser.from_file(cfg.gmm_file)
    return BridgeDenoiser(cfg.bridge_cmd, n, channels, side)


def _write_outputs(result: RestoreResult, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, img in result.images.items():
            path = directory / f"{name}.png"
            imaging.save_png(img, path)
            written.append(path)
        metrics_path = directory / "metrics.txt"
        imaging.write_metrics(metrics_path, result.metrics)
        written.append(metrics_path)
        json_path = directory / "metrics.json"
        json_path.write_text(json.dumps(result.metrics, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
        written.append(json_path)
    except BaseException:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise
    return written


def cmd_restore(args) -> int:
    cfg = resolve_config(args)
    schedule = load_schedule(cfg)
    timesteps = tuple(schedule.subsample(cfg.steps))
    outdir = Path(cfg.outdir)
    inputs = list(args.inputs)
    if not inputs:
        raise ValueError("restore needs at least one input image")
    results = []
    for path in inputs:
        x_img = imaging.load_image(path)
        results.append((path, restore_image(x_img, cfg, schedule, timesteps)))
    outdir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, outdir, inputs)
    for path, result in results:
        target = outdir if len(inputs) == 1 else outdir / Path(path).stem
        _write_outputs(result, target)
    for path, result in results:
        print(f"{path}: psnr_mean={result.metrics['psnr_mean']:.4f}")
    return 0


def _parse_grid(text: str, default: tuple) -> list:
    if not text:
        return list(default)
    out = []
    for part in text.split(","):
        part = part.strip()
        if part:
            out.append("theorem" if part == "theorem" else float(part))
    if not out:
        raise ValueError("empty parameter grid")
    return out


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    schedule = load_schedule(cfg)
    timesteps = tuple(schedule.subsample(cfg.steps))
    eta_grid = _parse_grid(args.eta_grid, DEFAULT_ETA_GRID)
    etab_grid = _parse_grid(args.etab_grid, DEFAULT_ETAB_GRID)
    inputs = list(args.inputs)
    if not inputs:
        raise ValueError("sweep needs at least one input image")
    images = [imaging.load_image(p) for p in inputs]
    rows = []
    for eta in eta_grid:
        if isinstance(eta, str):
            raise ValueError("eta grid entries must be numbers")
        for etab in etab_grid:
            combo = replace(cfg, eta=float(eta), etab=str(etab))
            combo.validate()
            psnrs = []
            for img in images:
                res = restore_image(img, combo, schedule, timesteps)
                psnrs.append(res.metrics["psnr_mean"])
            rows.append((float(eta), str(etab), float(np.mean(psnrs))))
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, outdir, inputs)
    lines = ["eta,eta_b,psnr"] + [f"{e},{b},{p:.6f}" for e, b, p in rows]
    (outdir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    return 0


def cmd_verify(args) -> int:
    from . import verify

    def report(res) -> None:
        print(res.line(), flush=True)

    results = verify.run_checks(quick=args.quick, report=report)
    failed = sum(1 for res in results if not res.passed)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    summary = {
        "passed": len(results) - failed,
        "failed": failed,
        "checks": [{"name": r.name, "passed": r.passed, "skipped": r.skipped,
                    "seconds": round(r.seconds, 3)} for r in results],
    }
    print(json.dumps(summary, separators=(",", ":")))
    return 1 if failed else 0


def _add_shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--deg", help="degradation preset")
    p.add_argument("--sigma-y", dest="sigma_y", type=float, help="measurement noise std")
    p.add_argument("--eta", type=float, help="noise mix for the free branches")
    p.add_argument("--etab", help="blend weight for the clean branch, or 'theorem'")
    p.add_argument("--steps", type=int, help="number of chain transitions")
    p.add_argument("--seed", type=int, help="base seed for all streams")
    p.add_argument("--samples", type=int, help="restored samples per image")
    p.add_argument("--denoiser", choices=["gaussian", "gmm", "external"])
    p.add_argument("--tau", type=float, help="gaussian prior std")
    p.add_argument("--mu", type=float, help="gaussian prior mean")
    p.add_argument("--gmm-file", dest="gmm_file", help="mixture components file")
    p.add_argument("--bridge-cmd", dest="bridge_cmd", help="external denoiser command")
    p.add_argument("--class-label", dest="class_label", help="conditioning label")
    p.add_argument("--sv-threshold", dest="sv_threshold", type=float,
                   help="relative spectrum cutoff for separable blurs")
    p.add_argument("--mask", help="inpainting mask image (nonzero = dropped)")
    p.add_argument("--schedule-file", dest="schedule_file", help="sigma ladder file")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--std-scale", dest="std_scale", type=float,
                   help="scale for the std aggregate image")
    p.add_argument("--config", help="flat key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdiff",
        description="Restore images from linear degradations by spectral-space "
                    "diffusion posterior sampling.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_restore = sub.add_parser("restore", help="restore one or more images")
    p_restore.add_argument("inputs", nargs="+", metavar="IMAGE")
    _add_shared_flags(p_restore)
    p_restore.set_defaults(func=cmd_restore)

    p_sweep = sub.add_parser("sweep", help="grid-sweep eta / eta_b, emit CSV")
    p_sweep.add_argument("inputs", nargs="+", metavar="IMAGE")
    _add_shared_flags(p_sweep)
    p_sweep.add_argument("--eta-grid", dest="eta_grid", default="",
                         help="comma list of eta values")
    p_sweep.add_argument("--etab-grid", dest="etab_grid", default="",
                         help="comma list of eta_b values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the conformance checks")
    p_verify.add_argument("--quick", action="store_true",
                          help="skip the Monte-Carlo-heavy checks")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # one machine-parsable line, nonzero exit
        print(f"error={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
