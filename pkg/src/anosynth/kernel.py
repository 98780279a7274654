"""Aggregated multi-step reverse kernels.

A run of one-step reverse posteriors with a fixed clean-image estimate is
itself affine-Gaussian, so a whole segment [t_e, t_s] collapses into one
draw

    x_te = pi * x_ts + sigma_coef * x0_hat + sqrt(var) * eps.

Index-order note: in the closed form, each step i contributes its drift A_i
and noise sigma_i^2 weighted by the product of the B-coefficients of the
steps applied AFTER it (indices t_e+1 .. i-1, closer to t_e). Attaching the
weights to the other side (indices i+1 .. t_s) looks equally plausible on
paper but violates both conservation identities below; aggregate_bruteforce
pins down the correct order by composing the steps one at a time, and the
test suite checks the two routes against each other.

Every kernel satisfies two exact identities (float tolerance 1e-8):

    pi * sqrt(ab_ts) + sigma_coef = sqrt(ab_te)          (mean telescoping)
    pi^2 * (1 - ab_ts) + var      = 1 - ab_te            (variance budget)
"""
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .rng import RandomStream
from .schedule import NoiseSchedule, ScheduleError, posterior_coefficients


class KernelError(ValueError):
    """Invalid segment indices or incompatible kernels."""


@dataclass(frozen=True)
class SegmentKernel:
    """Affine-Gaussian transition from x at t_s down to t_e (t_e <= t_s)."""

    t_s: int
    t_e: int
    pi: float
    sigma_coef: float
    var: float


@dataclass(frozen=True)
class BoundarySchedule:
    """Strictly increasing boundaries t_1 < ... < t_K = T; t_1 is the
    cutoff below which sampling switches to per-step refinement."""

    boundaries: tuple

    def __post_init__(self):
        b = self.boundaries
        if len(b) == 0:
            raise KernelError("empty boundary schedule")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise KernelError("boundaries must be strictly increasing")

    @property
    def t1(self) -> int:
        return self.boundaries[0]

    @property
    def K(self) -> int:
        return len(self.boundaries)

    def segments(self):
        """(t_s, t_e) pairs from the top boundary down to t_1."""
        b = self.boundaries
        return [(b[k], b[k - 1]) for k in range(len(b) - 1, 0, -1)]


def _check_segment(sched: NoiseSchedule, t_s: int, t_e: int):
    if not (0 <= t_e <= t_s <= sched.T):
        raise KernelError(f"need 0 <= t_e <= t_s <= T, got ({t_s}, {t_e}), T={sched.T}")


def aggregate_segment(sched: NoiseSchedule, t_s: int, t_e: int) -> SegmentKernel:
    """Closed-form kernel over [t_e, t_s] in one forward pass.

    Walks i = t_e+1 .. t_s keeping the running product of B's already seen
    (the steps that will be applied after step i), so A_i and sigma_i^2 are
    weighted by prod_{j=t_e+1}^{i-1} B_j. Empty segment gives the identity.
    """
    _check_segment(sched, t_s, t_e)
    pi = 1.0
    sigma_coef = 0.0
    var = 0.0
    for i in range(t_e + 1, t_s + 1):
        c = posterior_coefficients(sched, i)
        sigma_coef += c.A * pi
        var += pi * pi * c.sigma2
        pi *= c.B
    return SegmentKernel(t_s=t_s, t_e=t_e, pi=pi, sigma_coef=sigma_coef, var=var)


def aggregate_bruteforce(sched: NoiseSchedule, t_s: int, t_e: int) -> SegmentKernel:
    """Ground-truth kernel by folding one step at a time.

    Starts from the identity at t_s and repeatedly applies the next step
    i = t_s, t_s-1, ..., t_e+1 to the accumulated affine-Gaussian map:
    pi <- B_i*pi, drift <- B_i*drift + A_i, var <- B_i^2*var + sigma_i^2.
    Independent code path used as the oracle for aggregate_segment.
    """
    _check_segment(sched, t_s, t_e)
    pi = 1.0
    sigma_coef = 0.0
    var = 0.0
    for i in range(t_s, t_e, -1):
        c = posterior_coefficients(sched, i)
        pi = c.B * pi
        sigma_coef = c.B * sigma_coef + c.A
        var = c.B * c.B * var + c.sigma2
    return SegmentKernel(t_s=t_s, t_e=t_e, pi=pi, sigma_coef=sigma_coef, var=var)


def compose_kernels(outer: SegmentKernel, inner: SegmentKernel) -> SegmentKernel:
    """Chain inner (t_s -> t_m) then outer (t_m -> t_e) into one kernel."""
    if outer.t_s != inner.t_e:
        raise KernelError(
            f"segments not adjacent: outer spans {outer.t_s}->{outer.t_e}, "
            f"inner spans {inner.t_s}->{inner.t_e}")
    return SegmentKernel(
        t_s=inner.t_s,
        t_e=outer.t_e,
        pi=outer.pi * inner.pi,
        sigma_coef=outer.pi * inner.sigma_coef + outer.sigma_coef,
        var=outer.pi * outer.pi * inner.var + outer.var,
    )


def identity_kernel(t: int) -> SegmentKernel:
    return SegmentKernel(t_s=t, t_e=t, pi=1.0, sigma_coef=0.0, var=0.0)


def apply_kernel(k: SegmentKernel, x_ts, x0_hat, rng: RandomStream):
    """One draw of the segment: k.pi*x_ts + k.sigma_coef*x0_hat + noise."""
    x_ts = np.asarray(x_ts, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if x_ts.shape != x0_hat.shape:
        raise KernelError(f"shape mismatch: x_ts {x_ts.shape} vs x0_hat {x0_hat.shape}")
    out = k.pi * x_ts + k.sigma_coef * x0_hat
    if k.var > 0.0:
        out = out + np.sqrt(k.var) * rng.gaussian(x_ts.shape)
    return out


def make_boundary_schedule(T: int, K: int, t1: int,
                           spacing: str = "log") -> BoundarySchedule:
    """Exactly K boundaries over [t1, T], geometric by default.

    Geometric spacing concentrates boundaries at small timesteps, where the
    clean-image estimate changes fastest and holding it fixed across a long
    segment visibly shrinks sample variance (uniform spacing loses ~19% of
    terminal std at K=50 in the analytic Gaussian world; geometric stays
    within a few percent of the per-step sampler). spacing="linear" keeps
    uniform timestep spacing.

    Raw positions are rounded half-up; collisions are repaired to the
    nearest free integers so the boundary count is always exactly K
    (deterministic: bump-up left-to-right, then clamp right-to-left at T).
    K = T - t1 + 1 therefore yields every timestep and the sampler
    degenerates to the per-step chain.
    """
    if not (1 <= t1 < T):
        raise KernelError(f"need 1 <= t1 < T, got t1={t1}, T={T}")
    if K < 2:
        raise KernelError("need at least 2 boundaries to span [t1, T]")
    if K > T - t1 + 1:
        raise KernelError(f"K={K} exceeds the {T - t1 + 1} timesteps in [t1, T]")
    u = np.arange(K) / (K - 1)
    if spacing == "log":
        raw = t1 * (T / t1) ** u
    elif spacing == "linear":
        raw = t1 + (T - t1) * u
    else:
        raise KernelError(f"unknown spacing {spacing!r}")
    pts = [int(np.floor(v + 0.5)) for v in raw]
    for i in range(1, K):
        pts[i] = max(pts[i], pts[i - 1] + 1)
    pts[-1] = T
    for i in range(K - 2, -1, -1):
        pts[i] = min(pts[i], pts[i + 1] - 1)
    pts[0] = t1
    return BoundarySchedule(boundaries=tuple(pts))


def segment_kernel_table(sched: NoiseSchedule, bounds: BoundarySchedule):
    """Precompute every segment kernel of a boundary schedule once.

    Returns a read-only {(t_s, t_e): SegmentKernel} mapping; samplers share
    it freely across runs and threads.
    """
    if bounds.boundaries[-1] > sched.T:
        raise ScheduleError("boundary schedule exceeds schedule length")
    table = {seg: aggregate_segment(sched, *seg) for seg in bounds.segments()}
    return MappingProxyType(table)
