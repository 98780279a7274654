"""Noise predictors: the pluggable interface, two analytic oracles, and a
tiny trainable model for desk-scale experiments.

A denoiser maps (x_t, t) to a noise estimate; the matching clean-image
estimate is recovered with x0_from_eps. Denoisers are immutable once
built and predict_eps is pure, so one instance can serve many samplers.
"""
from dataclasses import dataclass

import numpy as np

from .rng import RandomStream
from .schedule import NoiseSchedule, ScheduleError, forward_marginal


class Denoiser:
    """Behavioral contract: predict_eps(x_t, t) -> eps_hat, same shape."""

    def predict_eps(self, x_t, t: int):
        raise NotImplementedError


def x0_from_eps(sched: NoiseSchedule, x_t, t: int, eps_hat):
    """Invert the forward marginal: (x_t - sqrt(1-ab_t)*eps_hat)/sqrt(ab_t).

    t = 0 is rejected: the formula degenerates to the identity there and a
    caller asking for it almost certainly has an off-by-one bug.
    """
    sched.check_t(t)
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ScheduleError(f"shape mismatch: x_t {x_t.shape} vs eps_hat {eps_hat.shape}")
    return ((x_t - np.sqrt(sched.one_minus_alpha_bar[t]) * eps_hat)
            / np.sqrt(sched.alpha_bar[t]))


class ConstantDenoiser(Denoiser):
    """Always decodes to a fixed clean image.

    predict_eps returns the eps_hat that makes x0_from_eps yield x0_fixed,
    i.e. (x_t - sqrt(ab_t)*x0_fixed)/sqrt(1-ab_t). Realizes the frozen-x0
    premise under which segment kernels are exact.
    """

    def __init__(self, sched: NoiseSchedule, x0_fixed):
        self.sched = sched
        self.x0_fixed = np.asarray(x0_fixed, dtype=np.float64)

    def predict_eps(self, x_t, t: int):
        self.sched.check_t(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        s = self.sched
        return ((x_t - np.sqrt(s.alpha_bar[t]) * self.x0_fixed)
                / np.sqrt(s.one_minus_alpha_bar[t]))


@dataclass(frozen=True)
class GaussianWorld:
    """Clean data distribution with independent per-pixel normals."""

    mu0: np.ndarray
    s0sq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu0", np.asarray(self.mu0, dtype=np.float64))
        object.__setattr__(self, "s0sq", np.asarray(self.s0sq, dtype=np.float64))
        if np.any(self.s0sq <= 0.0):
            raise ValueError("s0sq must be positive everywhere")

    def sample(self, shape, rng: RandomStream):
        return self.mu0 + np.sqrt(self.s0sq) * rng.gaussian(shape)


class GaussianAnalyticDenoiser(Denoiser):
    """Exact posterior-mean denoiser for Gaussian per-pixel data.

    For x0 ~ N(mu0, s0sq) the conditional mean given x_t is

        E[x0|x_t] = (sqrt(ab_t)*s0sq*x_t + (1-ab_t)*mu0) / (ab_t*s0sq + 1-ab_t)

    and predict_eps is derived through the reparameterization inverse. This
    is the strongest denoiser the world admits, which makes it the oracle
    for end-to-end moment tests.
    """

    def __init__(self, world: GaussianWorld, sched: NoiseSchedule):
        self.world = world
        self.sched = sched

    def x0_mean(self, x_t, t: int):
        ab = self.sched.alpha_bar[t]
        omab = self.sched.one_minus_alpha_bar[t]
        w = self.world
        denom = ab * w.s0sq + omab
        return (np.sqrt(ab) * w.s0sq * np.asarray(x_t, dtype=np.float64)
                + omab * w.mu0) / denom

    def predict_eps(self, x_t, t: int):
        self.sched.check_t(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        s = self.sched
        return ((x_t - np.sqrt(s.alpha_bar[t]) * self.x0_mean(x_t, t))
                / np.sqrt(s.one_minus_alpha_bar[t]))


@dataclass
class TrainingConfig:
    """Knobs shared by the trainable components."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 1.5e-4
    batch: int = 4
    iters: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise ValueError("loss weights must be nonnegative")
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")


class AffineDenoiser(Denoiser):
    """Per-pixel affine noise predictor with a per-timestep bias.

    eps_hat = w * x_t + b[t]; w has the image shape, b is one scalar per
    timestep. Deliberately minimal: enough structure to exercise the
    noise-prediction objective and its gradients without an autodiff stack.
    """

    def __init__(self, sched: NoiseSchedule, shape):
        self.sched = sched
        self.shape = tuple(shape)
        self.w = np.zeros(self.shape)
        self.b = np.zeros(sched.T + 1)
        self.loss_history = []

    def predict_eps(self, x_t, t: int):
        self.sched.check_t(t)
        x_t = np.asarray(x_t, dtype=np.float64)
        return self.w * x_t + self.b[t]


class CountingDenoiser(Denoiser):
    """Pass-through wrapper that counts predict_eps calls."""

    def __init__(self, inner: Denoiser):
        self.inner = inner
        self.calls = 0

    def predict_eps(self, x_t, t: int):
        self.calls += 1
        return self.inner.predict_eps(x_t, t)


class RecordingDenoiser(Denoiser):
    """Pass-through wrapper that snapshots its input at chosen timesteps."""

    def __init__(self, inner: Denoiser, record_at=()):
        self.inner = inner
        self.record_at = set(record_at)
        self.records = {t: [] for t in self.record_at}

    def predict_eps(self, x_t, t: int):
        if t in self.record_at:
            self.records[t].append(np.array(x_t, copy=True))
        return self.inner.predict_eps(x_t, t)


def noise_prediction_loss(model: AffineDenoiser, x0, t: int, eps):
    """Mean-squared noise-prediction error and its parameter gradients."""
    x_t = forward_marginal(model.sched, x0, t, eps)
    resid = model.predict_eps(x_t, t) - eps
    n = resid.size
    loss = float(np.mean(resid * resid))
    grad_w = 2.0 / n * resid * x_t
    grad_bt = 2.0 / n * float(np.sum(resid))
    return loss, grad_w, grad_bt


def save_denoiser(path, d: Denoiser):
    """Serialize a denoiser to a tensor bundle; the kind names the model."""
    from .tensorfile import save_bundle

    if isinstance(d, ConstantDenoiser):
        save_bundle(path, "constant-denoiser", {"x0_fixed": d.x0_fixed})
    elif isinstance(d, GaussianAnalyticDenoiser):
        save_bundle(path, "gaussian-denoiser",
                    {"mu0": d.world.mu0, "s0sq": d.world.s0sq})
    elif isinstance(d, AffineDenoiser):
        save_bundle(path, "affine-denoiser", {"w": d.w, "b": d.b})
    else:
        raise TypeError(f"cannot serialize denoiser of type {type(d).__name__}")


def load_denoiser(path, sched: NoiseSchedule) -> Denoiser:
    from .tensorfile import TensorFormatError, load_bundle

    kind, tensors = load_bundle(path)
    if kind == "constant-denoiser":
        return ConstantDenoiser(sched, tensors["x0_fixed"].astype(np.float64))
    if kind == "gaussian-denoiser":
        world = GaussianWorld(mu0=tensors["mu0"].astype(np.float64),
                              s0sq=tensors["s0sq"].astype(np.float64))
        return GaussianAnalyticDenoiser(world, sched)
    if kind == "affine-denoiser":
        b = tensors["b"].astype(np.float64)
        if b.shape != (sched.T + 1,):
            raise TensorFormatError(
                f"affine-denoiser bias length {b.shape} does not match T={sched.T}")
        model = AffineDenoiser(sched, tensors["w"].shape)
        model.w = tensors["w"].astype(np.float64)
        model.b = b
        return model
    raise TensorFormatError(f"unknown denoiser kind {kind!r}")


def tiny_denoiser_train(dataset, sched: NoiseSchedule, cfg: TrainingConfig) -> AffineDenoiser:
    """SGD on the noise-prediction objective with uniform timestep sampling.

    Raises on an empty dataset and aborts with diagnostics if the loss goes
    non-finite. Deterministic for a fixed cfg.seed.
    """
    if len(dataset) == 0:
        raise ValueError("tiny_denoiser_train: empty dataset")
    data = [np.asarray(x, dtype=np.float64) for x in dataset]
    model = AffineDenoiser(sched, data[0].shape)
    stream = RandomStream(cfg.seed, stream_id=101)
    for it in range(cfg.iters):
        gw = np.zeros_like(model.w)
        gb = np.zeros_like(model.b)
        loss_acc = 0.0
        for _ in range(cfg.batch):
            x0 = data[stream.integers(0, len(data) - 1)]
            t = stream.integers(1, sched.T)
            eps = stream.gaussian(x0.shape)
            loss, grad_w, grad_bt = noise_prediction_loss(model, x0, t, eps)
            loss_acc += loss
            gw += grad_w
            gb[t] += grad_bt
        loss_acc /= cfg.batch
        if not np.isfinite(loss_acc):
            raise RuntimeError(
                f"non-finite loss at iteration {it}: |w|={np.linalg.norm(model.w):.3e}, "
                f"|b|={np.linalg.norm(model.b):.3e}")
        model.w -= cfg.lr * gw / cfg.batch
        model.b -= cfg.lr * gb / cfg.batch
        model.loss_history.append(loss_acc)
    return model
