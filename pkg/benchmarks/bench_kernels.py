"""Compare the numba-compiled kernels against their numpy / pure-Python forms.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 3]

Both forms receive identical random inputs; the script checks that they
agree and prints the best-of-N wall time for each.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dtlsduty import kernels
from dtlsduty.dtls import RetransmitPolicy
from dtlsduty.mac.xmac import PreambleConfig


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_tsch(n, repeat):
    rng = np.random.default_rng(0)
    l, c = 101, 3
    ready = rng.random(n) * l
    offsets = np.sort(np.argsort(rng.random((n, l)), axis=1)[:, :c], axis=1).astype(np.float64)
    fails = rng.geometric(0.7, size=n).astype(np.int64) - 1
    kernels.tsch_latency_numba(ready[:10], offsets[:10], fails[:10], l)
    a = best_of(lambda: kernels.tsch_latency_numba(ready, offsets, fails, l), repeat)
    b = best_of(lambda: kernels.tsch_latency_numpy(ready, offsets, fails, l), repeat)
    return "tsch_latency", a, b


def bench_xmac(n, repeat):
    cfg = PreambleConfig(check_interval_ci=0.5)
    pol = RetransmitPolicy()
    A = pol.max_retransmissions + 1
    rng = np.random.default_rng(1)
    draws = rng.random((n, A, 5))
    draws[:, :, 0] = cfg.check_interval_ci * (1 - draws[:, :, 0])
    geo = rng.geometric(0.81, size=(n, A)).astype(np.int64) - 1
    to = np.array([pol.timeout(i) for i in range(A)])
    args = (to, cfg.check_interval_ci, cfg.period, cfg.strobe_duration, cfg.early_ack_airtime,
            cfg.data_frame_airtime, cfg.catch, cfg.n_strobes, 0.9, True)
    kernels.xmac_latency_numba(draws[:10], geo[:10], *args)
    a = best_of(lambda: kernels.xmac_latency_numba(draws, geo, *args), repeat)
    b = best_of(lambda: kernels.xmac_latency_numpy(draws, geo, *args), repeat)
    return "xmac_latency", a, b


def bench_engset(n, repeat):
    u = np.random.default_rng(2).random(2 * n)

    def run(fn):
        state = np.array([0.0, 0.0, 0.0])
        acc = np.zeros((50, 3))
        fn(u, 5, 3, 0.5, 1.0, 1e12, 1e10, state, acc)
        return acc

    run(kernels.engset_chunk_numba)
    a = best_of(lambda: run(kernels.engset_chunk_numba), repeat)
    b = best_of(lambda: run(kernels.engset_chunk_python), max(1, repeat // 3))
    return "engset_chunk", a, b


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    print(f"{'kernel':<14} {'numba_s':>9} {'fallback_s':>11} {'speedup':>8}  agree")
    for bench in (bench_tsch, bench_xmac, bench_engset):
        name, (ta, ra), (tb, rb) = bench(args.n, args.repeat)
        agree = np.allclose(ra, rb, equal_nan=True)
        print(f"{name:<14} {ta:9.4f} {tb:11.4f} {tb / ta:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
