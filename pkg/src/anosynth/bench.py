"""Step-sweep benchmark: synthesis cost and terminal-moment quality as a
function of the boundary count K.

Runs are sequential (wall times stay honest) with one discarded warm-up
per K. The terminal moment error compares the pooled sampler output
against the analytic clean-data moments of a Gaussian world; with leading
batch dimensions on the input, each run contributes that many i.i.d.
samples to the pool.
"""
import time
from dataclasses import dataclass

import numpy as np

from .denoiser import CountingDenoiser, GaussianWorld
from .kernel import make_boundary_schedule, segment_kernel_table
from .rng import RandomStream
from .sampler import SamplerConfig, SynthesisInput, aias_sample
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class BenchRecord:
    K: int
    denoiser_calls: int
    wall_time: float  # seconds per synthesis run
    terminal_moment_error: float

    def header(self):
        return "K\tdenoiser_calls\twall_time\tterminal_moment_error"

    def line(self):
        return (f"{self.K}\t{self.denoiser_calls}\t{self.wall_time:.6f}"
                f"\t{self.terminal_moment_error:.6g}")


def moment_error(samples, world: GaussianWorld) -> float:
    """Relative mean error plus relative std error vs the analytic target."""
    x = np.ravel(np.asarray(samples, dtype=np.float64))
    mu = float(np.mean(world.mu0))
    sd = float(np.sqrt(np.mean(world.s0sq)))
    return abs(float(np.mean(x)) - mu) / abs(mu) + abs(float(np.std(x)) - sd) / sd


def bench_steps(sched: NoiseSchedule, denoiser, farm, inp: SynthesisInput,
                K_list, repeats: int, t1: int = 2, seed: int = 0,
                world: GaussianWorld | None = None):
    """One BenchRecord per K; call counts must match (K-1) + t1 exactly."""
    records = []
    for K in K_list:
        bounds = make_boundary_schedule(sched.T, K, t1)
        cfg = SamplerConfig(boundaries=bounds, fine_cutoff=t1,
                            farm_enabled=farm is not None, seed=seed)
        table = segment_kernel_table(sched, bounds)
        counter = CountingDenoiser(denoiser)

        aias_sample(sched, cfg, counter, farm, inp,
                    RandomStream(seed, stream_id=0), kernels=table)  # warm-up
        counter.calls = 0
        outs = []
        start = time.perf_counter()
        for r in range(repeats):
            outs.append(aias_sample(sched, cfg, counter, farm, inp,
                                    RandomStream(seed, stream_id=r + 1),
                                    kernels=table))
        elapsed = (time.perf_counter() - start) / repeats
        calls_per_run = counter.calls // repeats
        expect = (bounds.K - 1) + t1
        if counter.calls != repeats * expect or calls_per_run != expect:
            raise AssertionError(
                f"K={K}: measured {counter.calls} denoiser calls over {repeats} "
                f"runs, expected {expect} per run")
        err = moment_error(np.stack(outs), world) if world is not None else float("nan")
        records.append(BenchRecord(K=bounds.K, denoiser_calls=calls_per_run,
                                   wall_time=elapsed, terminal_moment_error=err))

    calls = [r.denoiser_calls for r in records]
    ks = [r.K for r in records]
    order = np.argsort(ks)
    if not all(calls[order[i]] < calls[order[i + 1]] for i in range(len(order) - 1)):
        raise AssertionError("denoiser call counts not strictly increasing in K")
    return records
