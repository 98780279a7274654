"""Command-line surface.

Subcommands: verify-kernel, train-farm, sample, bench, score. Options come
from a flat key=value config file (--config) with flag overrides; every
command exits 0 only when all of its checks pass and is bit-reproducible
for a fixed config and seed.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import KERNEL_BACKEND, __version__
from .bench import bench_steps
from .config import Config, load_config
from .dataset import scan_dataset
from .denoiser import (ConstantDenoiser, GaussianAnalyticDenoiser, GaussianWorld,
                       TrainingConfig, load_denoiser)
from .farm import farm_train, load_farm_params, masked_reconstruction_mse, save_farm_params
from .kernel import (aggregate_bruteforce, aggregate_segment, compose_kernels,
                     make_boundary_schedule, segment_kernel_table)
from .metrics import metric_report
from .rng import RandomStream
from .sampler import SamplerConfig, SynthesisInput, aias_sample
from .schedule import build_linear_schedule
from .synthdata import make_synthetic_corpus
from .tensorfile import load_mask, load_tensor, save_mask, save_tensor


class CliError(RuntimeError):
    """User-facing command failure: printed as one line, exit status 1."""


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _build_config(args) -> Config:
    file_values = load_config(args.config) if args.config else {}
    overrides = {
        "seed": getattr(args, "seed", None),
        "steps": getattr(args, "steps", None),
        "t1": getattr(args, "t1", None),
    }
    if getattr(args, "no_farm", False):
        overrides["farm"] = "0"
    return Config(file_values, overrides)


def _schedule(cfg: Config):
    return build_linear_schedule(cfg.get_int("T"), cfg.get_float("beta_start"),
                                 cfg.get_float("beta_end"))


def _denoiser(cfg: Config, sched):
    kind = cfg.get("denoiser")
    if kind == "constant":
        return ConstantDenoiser(sched, np.float64(cfg.get_float("x0_const")))
    if kind == "gaussian":
        world = GaussianWorld(mu0=cfg.get_float("mu0"), s0sq=cfg.get_float("s0sq"))
        return GaussianAnalyticDenoiser(world, sched)
    if kind == "tiny":
        path = cfg.get("denoiser_path")
        if not path:
            raise CliError("denoiser=tiny requires denoiser_path in the config")
        return load_denoiser(path, sched)
    raise CliError(f"unknown denoiser kind {kind!r}")


def _boundaries(cfg: Config, sched):
    """Boundary schedule from the config: explicit list or (steps, t1)."""
    from .kernel import BoundarySchedule

    explicit = cfg.get("boundaries")
    if explicit:
        pts = tuple(int(s) for s in str(explicit).split(","))
        return BoundarySchedule(boundaries=pts)
    spacing = cfg.get("spacing") or "log"
    return make_boundary_schedule(sched.T, cfg.get_int("steps"),
                                  cfg.get_int("t1"), spacing=spacing)


def cmd_verify_kernel(args) -> int:
    cfg = _build_config(args)
    sched = _schedule(cfg)
    seed = cfg.get_int("seed")
    stream = RandomStream(seed, stream_id=7)
    T = sched.T

    worst_pair = 0.0
    for _ in range(200):
        t_e = stream.integers(0, T - 1)
        t_s = stream.integers(t_e, T)
        a = aggregate_segment(sched, t_s, t_e)
        b = aggregate_bruteforce(sched, t_s, t_e)
        worst_pair = max(worst_pair, _rel(a.pi, b.pi), _rel(a.sigma_coef, b.sigma_coef),
                         _rel(a.var, b.var))

    bounds = make_boundary_schedule(T, cfg.get_int("steps"), cfg.get_int("t1"))
    worst_tel = worst_var = 0.0
    for k in segment_kernel_table(sched, bounds).values():
        ab_s, ab_e = sched.alpha_bar[k.t_s], sched.alpha_bar[k.t_e]
        om_s, om_e = sched.one_minus_alpha_bar[k.t_s], sched.one_minus_alpha_bar[k.t_e]
        worst_tel = max(worst_tel, abs(k.pi * np.sqrt(ab_s) + k.sigma_coef - np.sqrt(ab_e)))
        worst_var = max(worst_var, abs(k.pi ** 2 * om_s + k.var - om_e))

    worst_comp = 0.0
    for _ in range(50):
        t_e = stream.integers(0, T - 2)
        t_m = stream.integers(t_e, T - 1)
        t_s = stream.integers(t_m, T)
        direct = aggregate_segment(sched, t_s, t_e)
        comp = compose_kernels(aggregate_segment(sched, t_m, t_e),
                               aggregate_segment(sched, t_s, t_m))
        worst_comp = max(worst_comp, _rel(direct.pi, comp.pi),
                         _rel(direct.sigma_coef, comp.sigma_coef),
                         _rel(direct.var, comp.var))

    checks = [
        ("closed-form vs stepwise composition (200 pairs)", worst_pair, 1e-10),
        ("mean telescoping residual", worst_tel, 1e-8),
        ("variance budget residual", worst_var, 1e-8),
        ("segment composition law", worst_comp, 1e-10),
    ]
    ok = True
    for name, value, tol in checks:
        state = "pass" if value <= tol else "FAIL"
        ok &= value <= tol
        print(f"{state}  {name}: {value:.3e} (tol {tol:.0e})")
    return 0 if ok else 1


def cmd_train_farm(args) -> int:
    import logging

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = _build_config(args)
    sched = _schedule(cfg)
    root = cfg.get("dataset")
    if root:
        dataset = scan_dataset(root).pairs()
    else:
        dataset = make_synthetic_corpus(cfg.get_int("corpus_size"),
                                        hw=cfg.get_int("corpus_hw"),
                                        channels=cfg.get_int("channels"),
                                        seed=cfg.get_int("seed"))
    tc = TrainingConfig(lambda1=cfg.get_float("lambda1"), lambda2=cfg.get_float("lambda2"),
                        lr=cfg.get_float("lr"), batch=cfg.get_int("batch"),
                        iters=cfg.get_int("iters"), seed=cfg.get_int("seed"))
    params = farm_train(dataset, sched, tc, features=cfg.get_int("features"),
                        embed_dim=cfg.get_int("embed_dim"))
    mse = masked_reconstruction_mse(dataset, sched, params, seed=tc.seed)
    out = args.out or "farm_params.afb"
    save_farm_params(out, params)
    print(f"trained on {len(dataset)} pairs for {tc.iters} iters; "
          f"masked reconstruction mse {mse:.6f}; params -> {out}")
    return 0


def cmd_sample(args) -> int:
    cfg = _build_config(args)
    sched = _schedule(cfg)
    if not args.mask or not args.background:
        raise CliError("sample requires --mask and --background")
    M = load_mask(args.mask)
    bg = _load_background(args.background)
    if bg.shape[-2:] != M.shape:
        raise CliError(f"background {bg.shape[-2:]} vs mask {M.shape}")
    farm_on = cfg.get_bool("farm")
    params = None
    if farm_on:
        path = cfg.get("farm_path")
        if not path:
            raise CliError("farm is enabled but farm_path is not configured; "
                             "set farm_path or pass --no-farm")
        params = load_farm_params(path)
    bounds = _boundaries(cfg, sched)
    scfg = SamplerConfig(boundaries=bounds, fine_cutoff=bounds.t1,
                         farm_enabled=farm_on, seed=cfg.get_int("seed"))
    inp = SynthesisInput(background_full=bg, background_latent=bg, mask=M)
    rng = RandomStream(scfg.seed, stream_id=0)
    image = aias_sample(sched, scfg, _denoiser(cfg, sched), params, inp, rng)
    out = Path(args.out or "sample_out")
    save_tensor(out.with_suffix(".aft"), image)
    save_mask(out.with_name(out.name + "_mask.pgm"), M)
    print(f"wrote {out.with_suffix('.aft')} and {out.name}_mask.pgm "
          f"({bounds.K - 1} coarse + {bounds.t1} fine denoiser calls)")
    return 0


def _load_background(path):
    p = Path(path)
    with open(p, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        from .tensorfile import _read_pgm

        raster = _read_pgm(p.read_bytes())
        return raster.astype(np.float64)[None] / 255.0
    return load_tensor(p).astype(np.float64)


def cmd_bench(args) -> int:
    cfg = _build_config(args)
    sched = _schedule(cfg)
    world = GaussianWorld(mu0=cfg.get_float("mu0"), s0sq=cfg.get_float("s0sq"))
    den = GaussianAnalyticDenoiser(world, sched)
    hw = cfg.get_int("bench_hw") if cfg.get("bench_hw") else 8
    batch = cfg.get_int("bench_batch") if cfg.get("bench_batch") else 64
    repeats = cfg.get_int("bench_repeats") if cfg.get("bench_repeats") else 3
    bg = np.full((batch, 1, hw, hw), float(np.mean(world.mu0)))
    inp = SynthesisInput(background_full=bg, background_latent=bg,
                         mask=np.ones((hw, hw), dtype=np.uint8))
    K_list = [int(s) for s in str(cfg.get("steps")).split(",")]
    records = bench_steps(sched, den, None, inp, K_list, repeats,
                          t1=cfg.get_int("t1"), seed=cfg.get_int("seed"), world=world)
    lines = [records[0].header()] + [r.line() for r in records]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(records)} records to {args.out} (backend: {KERNEL_BACKEND})")
    else:
        sys.stdout.write(text)
    return 0


def cmd_score(args) -> int:
    pred_dir = Path(args.dir)
    pairs = sorted(pred_dir.glob("*_pred.pgm"))
    if not pairs:
        raise CliError(f"no *_pred.pgm files under {pred_dir}")
    lines = ["name\tmiou\tacc"]
    mious, accs = [], []
    for pred_path in pairs:
        stem = pred_path.name[:-len("_pred.pgm")]
        gt_path = pred_path.with_name(f"{stem}_gt.pgm")
        if not gt_path.exists():
            raise CliError(f"{pred_path.name}: missing ground truth {gt_path.name}")
        rep = metric_report(load_mask(pred_path), load_mask(gt_path))
        mious.append(rep.miou)
        accs.append(rep.acc)
        lines.append(f"{stem}\t{rep.miou:.6f}\t{rep.acc:.6f}")
    lines.append(f"average\t{np.mean(mious):.6f}\t{np.mean(accs):.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anosynth",
                                     description="masked anomaly synthesis engine")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, help="override RNG seed")
    common.add_argument("--steps", "-K", help="boundary count (or list for bench)")
    common.add_argument("--t1", type=int, help="fine-refinement cutoff")
    common.add_argument("--out", help="output path")

    p = sub.add_parser("verify-kernel", parents=[common],
                       help="check the kernel identities, print residuals")
    p.set_defaults(func=cmd_verify_kernel)

    p = sub.add_parser("train-farm", parents=[common],
                       help="train the reconstruction module, save params")
    p.set_defaults(func=cmd_train_farm)

    p = sub.add_parser("sample", parents=[common],
                       help="synthesize one image/mask pair")
    p.add_argument("--mask", help="binary mask file (PGM or tensor)")
    p.add_argument("--background", help="clean background (tensor or PGM)")
    p.add_argument("--no-farm", action="store_true",
                   help="disable foreground reconstruction")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bench", parents=[common],
                       help="step-sweep benchmark, one record per K")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("score", parents=[common],
                       help="mIoU/accuracy over a directory of mask pairs")
    p.add_argument("dir", help="directory of *_pred.pgm / *_gt.pgm pairs")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as e:  # one diagnostic line, nonzero exit
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
