"""Discrete-time noise schedule and per-step posterior coefficients.

Timesteps run 1..T with t = 0 meaning clean data; alpha_bar[0] is defined
as 1 so the t = 1 posterior is well formed (A_1 = 1, B_1 = 0, variance 0).
All tables are float64 and frozen at construction.
"""
from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    """Invalid schedule parameters or out-of-range timestep."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise levels.

    beta[t] for t = 1..T lives at index t of a length T+1 array (index 0 is
    unused and set to nan); alpha[t] = 1 - beta[t]; alpha_bar[t] is the
    cumulative product of alpha with alpha_bar[0] = 1.

    one_minus_alpha_bar carries 1 - alpha_bar through its own exact
    recurrence (omab_t = omab_{t-1} + alpha_bar_{t-1} * beta_t), avoiding
    the cancellation of computing 1 - alpha_bar at small t; in particular
    omab_1 == beta_1 exactly, which makes the t = 1 posterior coefficients
    land on (A, B, sigma2) = (1, 0, 0) without rounding.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    one_minus_alpha_bar: np.ndarray

    def __post_init__(self):
        for arr in (self.beta, self.alpha, self.alpha_bar,
                    self.one_minus_alpha_bar):
            arr.setflags(write=False)

    def check_t(self, t: int, low: int = 1):
        if not (low <= t <= self.T):
            raise ScheduleError(f"timestep {t} outside [{low}, {self.T}]")


@dataclass(frozen=True)
class StepCoefficients:
    """One-step reverse posterior x_{t-1} ~ N(A*x0 + B*x_t, sigma2)."""

    t: int
    A: float
    B: float
    sigma2: float


def build_linear_schedule(T: int, beta_start: float = 1e-4,
                          beta_end: float = 0.02) -> NoiseSchedule:
    """Linearly interpolated beta from beta_start (t=1) to beta_end (t=T)."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    beta = np.full(T + 1, np.nan)
    if T == 1:
        beta[1] = beta_start
    else:
        beta[1:] = np.linspace(beta_start, beta_end, T)
    return schedule_from_betas(beta[1:])


def schedule_from_betas(betas) -> NoiseSchedule:
    """Schedule from an explicit beta sequence (betas[i] is step i+1)."""
    b = np.asarray(betas, dtype=np.float64)
    if b.ndim != 1 or b.size < 1:
        raise ScheduleError("betas must be a nonempty 1-D sequence")
    if np.any(b <= 0.0) or np.any(b >= 1.0):
        raise ScheduleError("every beta must lie strictly inside (0, 1)")
    T = b.size
    beta = np.concatenate([[np.nan], b])
    alpha = np.concatenate([[np.nan], 1.0 - b])
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - b)])
    omab = np.empty(T + 1)
    omab[0] = 0.0
    for t in range(1, T + 1):
        omab[t] = omab[t - 1] + alpha_bar[t - 1] * beta[t]
    return NoiseSchedule(T=T, beta=beta, alpha=alpha, alpha_bar=alpha_bar,
                         one_minus_alpha_bar=omab)


def forward_marginal(sched: NoiseSchedule, x0, t: int, eps):
    """Noisy latent at step t: sqrt(ab_t)*x0 + sqrt(1-ab_t)*eps."""
    sched.check_t(t, low=0)
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ScheduleError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    return (np.sqrt(sched.alpha_bar[t]) * x0
            + np.sqrt(sched.one_minus_alpha_bar[t]) * eps)


def posterior_coefficients(sched: NoiseSchedule, t: int) -> StepCoefficients:
    """Coefficients of the exact one-step reverse posterior at step t."""
    sched.check_t(t)
    ab_prev = sched.alpha_bar[t - 1]
    omab_prev = sched.one_minus_alpha_bar[t - 1]
    beta_t = sched.beta[t]
    denom = sched.one_minus_alpha_bar[t]
    A = np.sqrt(ab_prev) * beta_t / denom
    B = np.sqrt(sched.alpha[t]) * omab_prev / denom
    sigma2 = omab_prev / denom * beta_t
    return StepCoefficients(t=t, A=float(A), B=float(B), sigma2=float(sigma2))


def posterior_tables(sched: NoiseSchedule):
    """(A, B, sigma2) arrays indexed by timestep (index 0 unused, nan).

    Same formulas as posterior_coefficients, vectorized for chain loops.
    """
    ab = sched.alpha_bar
    omab = sched.one_minus_alpha_bar
    beta = sched.beta[1:]
    denom = omab[1:]
    A = np.concatenate([[np.nan], np.sqrt(ab[:-1]) * beta / denom])
    B = np.concatenate([[np.nan], np.sqrt(sched.alpha[1:]) * omab[:-1] / denom])
    sigma2 = np.concatenate([[np.nan], omab[:-1] / denom * beta])
    return A, B, sigma2
