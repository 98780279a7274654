"""Synthesis pipelines: the per-step reference sampler, the accelerated
coarse-to-fine sampler, and the masked foreground/background fusion they
share.

The accelerated sampler walks the boundary schedule from T down to the fine
cutoff, replacing each run of reverse steps with one precomputed segment
kernel draw; the clean-image estimate is computed once at the top of each
segment and held fixed across it. At every boundary the background is
re-drawn from its forward marginal and fused back in, keeping noise levels
consistent on both sides of the mask, with an optional foreground
reconstruction pass adjusting the masked region. The last t1 steps run the
exact per-step posterior to restore fine detail.

All functions are pure given an explicit RandomStream; elementwise math
means tensors may carry extra leading batch dimensions (masks broadcast
from the trailing H x W axes) whenever the foreground module is disabled.
"""
from dataclasses import dataclass

import numpy as np

from .denoiser import Denoiser, x0_from_eps
from .farm import FarmParams, farm_inject, validate_mask
from .kernel import BoundarySchedule, KernelError, apply_kernel, segment_kernel_table
from .rng import RandomStream
from .schedule import NoiseSchedule, posterior_coefficients


@dataclass(frozen=True)
class SamplerConfig:
    boundaries: BoundarySchedule
    fine_cutoff: int
    farm_enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.fine_cutoff != self.boundaries.t1:
            raise KernelError(
                f"fine_cutoff {self.fine_cutoff} must equal the lowest boundary "
                f"{self.boundaries.t1}")


@dataclass(frozen=True)
class SynthesisInput:
    """Clean background (full image and working-space copy) plus the mask."""

    background_full: np.ndarray
    background_latent: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.mask)
        for name in ("background_full", "background_latent"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape[-2:] != M.shape:
                raise ValueError(
                    f"{name} spatial shape {arr.shape[-2:]} != mask {M.shape}")
            object.__setattr__(self, name, arr)


def decompose(x0, M):
    """Split a clean sample into (foreground, background); parts sum to x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    Mf = validate_mask(M)
    if x0.shape[-2:] != Mf.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs mask {Mf.shape}")
    return Mf * x0, (1.0 - Mf) * x0


def fuse_foreground(x_r, x_bg, M):
    """Masked merge: foreground from x_r, background from x_bg (bit-exact)."""
    x_r = np.asarray(x_r, dtype=np.float64)
    x_bg = np.asarray(x_bg, dtype=np.float64)
    Mb = validate_mask(M).astype(bool)
    if x_r.shape != x_bg.shape or x_r.shape[-2:] != Mb.shape:
        raise ValueError(
            f"shape mismatch: x_r {x_r.shape}, x_bg {x_bg.shape}, mask {Mb.shape}")
    return np.where(Mb, x_r, x_bg)


def posterior_step(sched: NoiseSchedule, denoiser: Denoiser, x, t: int,
                   rng: RandomStream):
    """One exact reverse step t -> t-1, re-estimating the clean image."""
    eps_hat = denoiser.predict_eps(x, t)
    x0_hat = x0_from_eps(sched, x, t, eps_hat)
    c = posterior_coefficients(sched, t)
    out = c.A * x0_hat + c.B * np.asarray(x, dtype=np.float64)
    if c.sigma2 > 0.0:
        out = out + np.sqrt(c.sigma2) * rng.gaussian(out.shape)
    return out


def ddpm_sample(sched: NoiseSchedule, denoiser: Denoiser, x_T,
                rng: RandomStream):
    """Full T-step reverse chain from x_T; the reference sampler."""
    x = np.asarray(x_T, dtype=np.float64)
    for t in range(sched.T, 0, -1):
        x = posterior_step(sched, denoiser, x, t, rng)
    return x


def fine_refine(sched: NoiseSchedule, denoiser: Denoiser, x_t1, t1: int,
                rng: RandomStream):
    """Per-step posterior sampling from t1 down to 0; identical code path to
    the tail of ddpm_sample."""
    sched.check_t(t1)
    x = np.asarray(x_t1, dtype=np.float64)
    for t in range(t1, 0, -1):
        x = posterior_step(sched, denoiser, x, t, rng)
    return x


def aias_sample(sched: NoiseSchedule, cfg: SamplerConfig, denoiser: Denoiser,
                farm: FarmParams | None, inp: SynthesisInput, rng: RandomStream,
                kernels=None):
    """Coarse-to-fine accelerated synthesis of one image/mask pair.

    Uses (K-1) denoiser calls for the coarse segments plus t1 for the fine
    tail. Pass a precomputed segment kernel table to share it across runs.
    """
    if cfg.farm_enabled and farm is None:
        raise ValueError("farm_enabled but no FarmParams given")
    bounds = cfg.boundaries
    if bounds.boundaries[-1] != sched.T:
        raise KernelError(f"top boundary {bounds.boundaries[-1]} != T={sched.T}")
    table = kernels if kernels is not None else segment_kernel_table(sched, bounds)
    Mf = validate_mask(inp.mask)
    bg_latent = inp.background_latent

    x = rng.gaussian(bg_latent.shape)
    for t_s, t_e in bounds.segments():
        eps_hat = denoiser.predict_eps(x, t_s)
        x0_hat = x0_from_eps(sched, x, t_s, eps_hat)
        x = apply_kernel(table[(t_s, t_e)], x, x0_hat, rng)
        x_bg = (np.sqrt(sched.alpha_bar[t_e]) * bg_latent
                + np.sqrt(sched.one_minus_alpha_bar[t_e]) * rng.gaussian(bg_latent.shape))
        if cfg.farm_enabled:
            x_r = farm_inject(x, Mf, t_e, farm, sched, rng)
        else:
            x_r = x
        x = fuse_foreground(x_r, x_bg, Mf)

    x0 = fine_refine(sched, denoiser, x, bounds.t1, rng)
    return fuse_foreground(x0, inp.background_full, Mf)
