"""Acceptance suite: one test per numbered criterion, at the stated
tolerances, printing one pass/fail line each (visible with pytest -s or on
failure).

Heavy Monte-Carlo runs use a leading batch axis as the run index; with
elementwise denoisers the pixels of a batched tensor are i.i.d. draws of
the scalar chain, so per-pixel statistics over the batch are exactly the
repeated-run statistics.
"""
import time

import numpy as np
import pytest

from anosynth import farm as farm_mod
from anosynth.bench import bench_steps
from anosynth.cli import main as cli_main
from anosynth.denoiser import (ConstantDenoiser, CountingDenoiser,
                               GaussianAnalyticDenoiser, GaussianWorld,
                               RecordingDenoiser, TrainingConfig)
from anosynth.kernel import (aggregate_bruteforce, aggregate_segment, apply_kernel,
                             make_boundary_schedule, segment_kernel_table)
from anosynth.metrics import miou, pixel_accuracy
from anosynth.rng import RandomStream
from anosynth.sampler import (SamplerConfig, SynthesisInput, aias_sample,
                              ddpm_sample)
from anosynth.schedule import build_linear_schedule, posterior_tables
from anosynth.synthdata import make_synthetic_corpus
from anosynth.tensorfile import save_mask, save_tensor


def report(n, ok, detail):
    print(f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


@pytest.fixture(scope="module")
def sched():
    return build_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture(scope="module")
def world():
    return GaussianWorld(mu0=0.3, s0sq=0.04)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_criterion_01_kernel_oracle_equivalence(sched):
    """200 random segments: closed form vs stepwise composition, 1e-10, <1s."""
    stream = RandomStream(7, stream_id=1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        t_e = stream.integers(0, sched.T - 1)
        t_s = stream.integers(t_e, sched.T)
        a = aggregate_segment(sched, t_s, t_e)
        b = aggregate_bruteforce(sched, t_s, t_e)
        worst = max(worst, rel(a.pi, b.pi), rel(a.sigma_coef, b.sigma_coef),
                    rel(a.var, b.var))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-10 and elapsed < 1.0
    assert report(1, ok, f"max rel deviation {worst:.2e} (tol 1e-10), "
                         f"{elapsed:.2f}s (limit 1s)")


def test_criterion_02_aggregated_identities(sched):
    """Telescoping and variance-budget identities, every kernel, 1e-8."""
    worst = 0.0
    n_kernels = 0
    for K, t1, spacing in ((50, 2, "log"), (50, 2, "linear"), (10, 2, "log"),
                           (999, 2, "log"), (5, 7, "linear")):
        bounds = make_boundary_schedule(sched.T, K, t1, spacing=spacing)
        for k in segment_kernel_table(sched, bounds).values():
            ab_s, ab_e = sched.alpha_bar[k.t_s], sched.alpha_bar[k.t_e]
            om_s, om_e = (sched.one_minus_alpha_bar[k.t_s],
                          sched.one_minus_alpha_bar[k.t_e])
            worst = max(worst,
                        abs(k.pi * np.sqrt(ab_s) + k.sigma_coef - np.sqrt(ab_e)),
                        abs(k.pi ** 2 * om_s + k.var - om_e))
            n_kernels += 1
    ok = worst < 1e-8
    assert report(2, ok, f"worst identity residual {worst:.2e} over "
                         f"{n_kernels} kernels (tol 1e-8)")


def test_criterion_03_segment_distributional_test(sched):
    """Sequential chain vs one kernel draw on 600->100, 5e4 runs, <1min."""
    start = time.perf_counter()
    n = 50_000
    x0c, x_start = 0.5, 1.0
    A, B, S2 = posterior_tables(sched)
    stream = RandomStream(31, stream_id=1)
    x = np.full(n, x_start)
    for t in range(600, 100, -1):
        x = A[t] * x0c + B[t] * x + np.sqrt(S2[t]) * stream.gaussian((n,))
    k = aggregate_segment(sched, 600, 100)
    direct = apply_kernel(k, np.full(n, x_start), np.full(n, x0c),
                          RandomStream(32, stream_id=2))
    se = np.sqrt(k.var / n)
    mean_gap = abs(x.mean() - direct.mean())
    var_gap = abs(x.var() - direct.var()) / direct.var()
    elapsed = time.perf_counter() - start
    ok = mean_gap < 4 * np.sqrt(2) * se and var_gap < 0.02 and elapsed < 60
    assert report(3, ok, f"mean gap {mean_gap:.2e} (4SE {4 * np.sqrt(2) * se:.2e}), "
                         f"var rel gap {var_gap:.4f} (tol 0.02), {elapsed:.1f}s")


def test_criterion_04_ddpm_degeneracy(sched):
    """Per-step boundaries + reconstruction off == reference chain moments."""
    n = 50_000
    den = ConstantDenoiser(sched, np.float64(0.5))
    rec_d = RecordingDenoiser(den, record_at=(2,))
    rng = RandomStream(41, stream_id=1)
    out_d = ddpm_sample(sched, rec_d, rng.gaussian((n, 1, 4, 4)), rng)
    bounds = make_boundary_schedule(sched.T, sched.T - 1, 2)
    cfg = SamplerConfig(boundaries=bounds, fine_cutoff=2)
    bg = np.zeros((n, 1, 4, 4))
    inp = SynthesisInput(background_full=bg, background_latent=bg,
                         mask=np.ones((4, 4), dtype=np.uint8))
    rec_a = RecordingDenoiser(den, record_at=(2,))
    out_a = aias_sample(sched, cfg, rec_a, None, inp, RandomStream(42, stream_id=2))
    xd = rec_d.records[2][0].ravel()
    xa = rec_a.records[2][0].ravel()
    se = np.sqrt(xd.var() / xd.size)
    mean_gap = abs(xd.mean() - xa.mean())
    var_gap = abs(xd.var() - xa.var()) / xd.var()
    term_gap = abs(out_d.mean() - out_a.mean())
    ok = (mean_gap < 4 * np.sqrt(2) * se and var_gap < 0.02
          and term_gap < 1e-12 and out_d.var() < 1e-24 and out_a.var() < 1e-24)
    assert report(4, ok, f"state@t=2 mean gap {mean_gap:.2e} "
                         f"(4SE {4 * np.sqrt(2) * se:.2e}), var rel gap "
                         f"{var_gap:.4f} (tol 0.02); terminals collapse to the "
                         f"fixed estimate (gap {term_gap:.1e})")


def test_criterion_05_gaussian_world_end_to_end(sched, world):
    """Accelerated vs reference sampler: moments within 5%, 51 vs 1000 calls."""
    start = time.perf_counter()
    n = 10_000
    den = GaussianAnalyticDenoiser(world, sched)

    counted_d = CountingDenoiser(den)
    rng = RandomStream(51, stream_id=1)
    t0 = time.perf_counter()
    out_d = ddpm_sample(sched, counted_d, rng.gaussian((n, 1, 8, 8)), rng)
    ddpm_wall = time.perf_counter() - t0
    ddpm_calls = counted_d.calls

    bounds = make_boundary_schedule(sched.T, 50, 2)
    cfg = SamplerConfig(boundaries=bounds, fine_cutoff=2)
    bg = np.full((n, 1, 8, 8), float(world.mu0))
    inp = SynthesisInput(background_full=bg, background_latent=bg,
                         mask=np.ones((8, 8), dtype=np.uint8))
    counted_a = CountingDenoiser(den)
    t0 = time.perf_counter()
    out_a = aias_sample(sched, cfg, counted_a, None, inp,
                        RandomStream(52, stream_id=2))
    aias_wall = time.perf_counter() - t0

    mean_gap = rel(out_a.mean(), out_d.mean())
    std_gap = rel(out_a.std(), out_d.std())
    # the reference sampler itself must land on the analytic data moments
    ddpm_vs_target = max(rel(out_d.mean(), float(world.mu0)),
                         rel(out_d.std(), float(np.sqrt(world.s0sq))))
    calls_10 = (make_boundary_schedule(sched.T, 10, 2).K - 1) + 2
    elapsed = time.perf_counter() - start
    ok = (mean_gap < 0.05 and std_gap < 0.05 and ddpm_vs_target < 0.05
          and counted_a.calls == 51 and ddpm_calls == 1000
          and ddpm_calls / counted_a.calls >= 19
          and ddpm_calls / calls_10 >= 89
          and aias_wall < ddpm_wall and elapsed < 300)
    assert report(5, ok, f"mean gap {mean_gap:.4f}, std gap {std_gap:.4f} "
                         f"(tol 0.05, reference vs analytic {ddpm_vs_target:.4f}); "
                         f"calls 51 vs 1000 "
                         f"({ddpm_calls / counted_a.calls:.1f}x, K=10 gives "
                         f"{ddpm_calls / calls_10:.1f}x); wall {aias_wall:.1f}s vs "
                         f"{ddpm_wall:.1f}s; total {elapsed:.0f}s (limit 300s)")


def test_criterion_06_step_sweep_saturation(sched, world):
    """Moment-error sweep over K: saturation by K=50, rapid gains from K=2.

    The 2x clause fails by construction of the samplers: the reference
    chain's only error at full depth is its fixed-variance bias (~1.9%
    terminal std), while any 50-boundary schedule must hold the clean
    estimate fixed across the late-time window where it tightens onto the
    state, costing >= 5% terminal std against the analytic target for every
    boundary placement (hill-climbed optimum ~5.0%; geometric default
    5.4%). The ratio is therefore ~2.7-2.9x for this sampler family, not
    2x. The README's acceptance section carries the full analysis.
    """
    n = 10_000
    den = GaussianAnalyticDenoiser(world, sched)
    bg = np.full((n, 1, 8, 8), float(world.mu0))
    inp = SynthesisInput(background_full=bg, background_latent=bg,
                         mask=np.ones((8, 8), dtype=np.uint8))
    records = bench_steps(sched, den, None, inp, [2, 50, sched.T - 1],
                          repeats=1, t1=2, seed=61, world=world)
    err = {r.K: r.terminal_moment_error for r in records}
    ok_rapid = err[2] > err[50]
    ok_saturation = err[50] <= 2.0 * err[sched.T - 1]
    ok = ok_rapid and ok_saturation
    report(6, ok, f"moment error K=2: {err[2]:.4f}, K=50: {err[50]:.4f}, "
                  f"K={sched.T - 1}: {err[sched.T - 1]:.4f}; rapid-gain clause "
                  f"{'holds' if ok_rapid else 'fails'}, 2x-saturation clause "
                  f"{'holds' if ok_saturation else 'fails'} "
                  f"(ratio {err[50] / err[sched.T - 1]:.2f}x)")
    assert ok_rapid
    assert ok_saturation, (
        f"moment error at K=50 is {err[50]:.4f}, more than twice the "
        f"{err[sched.T - 1]:.4f} at K={sched.T - 1} "
        f"(ratio {err[50] / err[sched.T - 1]:.2f}); unattainable for any "
        f"50-boundary schedule under the exact-posterior denoiser - see "
        f"this test's docstring and the README acceptance section")


def test_criterion_07_farm_training(sched):
    """200-sample corpus at training defaults: masked MSE under 0.1x initial
    and analytic gradients within 1e-3 of central differences."""
    start = time.perf_counter()
    corpus = make_synthetic_corpus(200, hw=32, channels=1, seed=11)
    cfg = farm_mod.default_training_config()
    assert cfg.iters <= 5000
    p0 = farm_mod.init_farm_params(1, RandomStream(cfg.seed, stream_id=202))
    mse0 = farm_mod.masked_reconstruction_mse(corpus, sched, p0, seed=5)
    params = farm_mod.farm_train(corpus, sched, cfg)
    mse1 = farm_mod.masked_reconstruction_mse(corpus, sched, params, seed=5)

    x0, M = corpus[0]
    stream = RandomStream(71)
    eps = stream.gaussian(x0.shape)
    t = 130
    _, grads = farm_mod.farm_objective(x0, M, t, eps, sched, params,
                                       TrainingConfig())
    h = 1e-5
    coords = np.random.RandomState(2)
    names = list(params.arrays())
    worst_fd = 0.0
    for _ in range(20):
        k = names[coords.randint(len(names))]
        arr = params.arrays()[k]
        idx = tuple(coords.randint(s) for s in arr.shape)
        orig = arr[idx]
        arr[idx] = orig + h
        lp, _ = farm_mod.farm_objective(x0, M, t, eps, sched, params, TrainingConfig())
        arr[idx] = orig - h
        lm, _ = farm_mod.farm_objective(x0, M, t, eps, sched, params, TrainingConfig())
        arr[idx] = orig
        fd = (lp - lm) / (2 * h)
        an = grads.arrays()[k][idx]
        worst_fd = max(worst_fd, abs(fd - an) / max(abs(fd), abs(an), 1e-10))
    elapsed = time.perf_counter() - start
    ok = mse1 < 0.1 * mse0 and worst_fd < 1e-3 and elapsed < 300
    assert report(7, ok, f"masked MSE {mse0:.4f} -> {mse1:.4f} "
                         f"({mse1 / mse0:.4f}x, tol 0.1x) in {cfg.iters} iters; "
                         f"worst gradient deviation {worst_fd:.2e} (tol 1e-3); "
                         f"{elapsed:.0f}s (limit 300s)")


def test_criterion_08_fusion_mask_invariants(sched):
    """Bitwise background preservation and soft-mask domination, 100+ draws."""
    small = build_linear_schedule(80, 1e-3, 0.05)
    stream = RandomStream(81)
    params = farm_mod.init_farm_params(1, RandomStream(82), features=8,
                                       embed_dim=16)
    den = ConstantDenoiser(small, np.zeros((1, 8, 8)))
    bounds = make_boundary_schedule(small.T, 6, 2)
    zero_mask_exact = True
    for trial in range(100):
        bg = stream.uniform((1, 8, 8))
        inp = SynthesisInput(background_full=bg, background_latent=bg,
                             mask=np.zeros((8, 8), dtype=np.uint8))
        cfg = SamplerConfig(boundaries=bounds, fine_cutoff=2,
                            farm_enabled=(trial % 2 == 0))
        out = aias_sample(small, cfg, den, params, inp, stream.child(1000 + trial))
        zero_mask_exact &= bool(np.array_equal(out, bg))

    inject_exact = True
    softmask_ok = True
    for trial in range(100):
        x = stream.gaussian((1, 8, 8))
        M = (stream.uniform((8, 8)) > 0.5).astype(np.uint8)
        t = stream.integers(0, small.T)
        out = farm_mod.farm_inject(x, M, t, params, small, stream)
        inject_exact &= bool(np.array_equal(out[:, M == 0], x[:, M == 0]))
        Md = farm_mod.downsample_mask(M, 2)
        tau = farm_mod.sinusoidal_embedding(t, params.embed_dim)
        Mt = farm_mod.soft_background_mask(Md, tau, params)
        softmask_ok &= bool(np.all(Mt >= Md[None]))
    ok = zero_mask_exact and inject_exact and softmask_ok
    assert report(8, ok, f"zero-mask identity {'exact' if zero_mask_exact else 'BROKEN'}, "
                         f"masked injection background {'exact' if inject_exact else 'BROKEN'}, "
                         f"soft mask >= hard mask {'holds' if softmask_ok else 'BROKEN'} "
                         f"(100 draws each)")


def test_criterion_09_metrics():
    """Hand-counted 2x2 case and the degenerate mask pairs."""
    gt = np.array([[1, 0], [0, 0]], dtype=np.uint8)
    pred = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    m = miou(pred, gt)
    a = pixel_accuracy(pred, gt)
    mixed = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    ok = (abs(m - 7 / 12) < 1e-15 and a == 0.75
          and miou(mixed, mixed) == 1.0 and pixel_accuracy(mixed, mixed) == 1.0
          and miou(mixed, 1 - mixed) == 0.0
          and pixel_accuracy(mixed, 1 - mixed) == 0.0)
    assert report(9, ok, f"2x2 case miou={m:.10f} (7/12), acc={a}; "
                         f"identical->1.0/1.0, disjoint->0.0/0.0")


def test_criterion_10_cli_determinism(tmp_path):
    """Every CLI command repeated with one config+seed: identical bytes."""
    cfg = tmp_path / "run.cfg"
    cfg.write_text("T=120\nbeta_start=1e-3\nbeta_end=0.05\ncorpus_size=4\n"
                   "corpus_hw=16\niters=5\nfeatures=4\nembed_dim=8\n"
                   "bench_batch=8\nbench_hw=4\nbench_repeats=1\n"
                   f"farm_path={tmp_path / 'farm1.afb'}\n")
    img, M = make_synthetic_corpus(1, hw=8, seed=3)[0]
    save_tensor(tmp_path / "bg.aft", img)
    save_mask(tmp_path / "m.pgm", M)
    save_mask(tmp_path / "c_pred.pgm", M)
    save_mask(tmp_path / "c_gt.pgm", M)

    def run(argv):
        assert cli_main(argv) == 0

    outs = {}
    for rep in (1, 2):
        run(["train-farm", "--config", str(cfg), "--seed", "3",
             "--out", str(tmp_path / f"farm{rep}.afb")])
        run(["sample", "--config", str(cfg), "--seed", "4",
             "--mask", str(tmp_path / "m.pgm"),
             "--background", str(tmp_path / "bg.aft"),
             "--steps", "6", "--out", str(tmp_path / f"img{rep}")])
        run(["bench", "--config", str(cfg), "-K", "2,5",
             "--out", str(tmp_path / f"bench{rep}.tsv")])
        run(["score", str(tmp_path), "--out", str(tmp_path / f"score{rep}.tsv")])
        outs[rep] = [
            (tmp_path / f"farm{rep}.afb").read_bytes(),
            (tmp_path / f"img{rep}.aft").read_bytes(),
            (tmp_path / f"img{rep}_mask.pgm").read_bytes(),
            (tmp_path / f"score{rep}.tsv").read_bytes(),
        ]
    bench_same = _strip_wall(tmp_path / "bench1.tsv") == _strip_wall(tmp_path / "bench2.tsv")
    ok = outs[1] == outs[2] and bench_same
    assert report(10, ok, "train-farm, sample, bench, score all byte-identical "
                          "across repeated runs (bench compared minus wall times)")


def _strip_wall(path):
    rows = [line.split("\t") for line in path.read_text().splitlines()]
    return [[c for i, c in enumerate(r) if i != 2] for r in rows]
