"""Compiled vs pure-Python kernel timings.

Runs the table replay kernel and the edge retention kernel through both
backends on identical inputs, checks they agree, and prints per-event cost
and the speed-up. Usage::

    python3 benchmarks/bench_kernels.py [--events 200000] [--trials 20000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nlb import _backend
from nlb.rng import stream_key
from nlb.sampler import NeighborTable, SamplerConfig, Scheme
from nlb.stats import DEFAULT_POOL, TIME_RESOLUTION, random_stream


def time_replay(kernels, stream, cfg: SamplerConfig, n_nodes: int) -> tuple[float, NeighborTable]:
    table = NeighborTable(n_nodes, cfg)
    t0 = time.perf_counter()
    kernels.replay(table.occupied, table.nbr, table.ts, table.feat, stream.src, stream.dst,
                   stream.ts, stream.feat_idx, stream.event_idx, cfg.s,
                   cfg.scheme is Scheme.NODE, float(cfg.alpha), cfg.q1, cfg.q2, table.rng.key)
    return time.perf_counter() - t0, table


def time_retention(kernels, cfg: SamplerConfig, trials: int) -> tuple[float, np.ndarray]:
    deltas = np.array([1.0, 2.0, 5.0, 10.0])
    t0 = time.perf_counter()
    counts = kernels.retention_edge(float(cfg.alpha), 2.0, cfg.s, cfg.q1, cfg.q2, DEFAULT_POOL,
                                    2.0 * cfg.s / 2.0, deltas, TIME_RESOLUTION,
                                    stream_key(cfg.seed, 1), 0, trials)
    return time.perf_counter() - t0, np.asarray(counts)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--nodes", type=int, default=1000)
    args = ap.parse_args()
    if _backend.compiled_kernels is None:
        raise SystemExit("compiled extension not built; run pip install -e . first")
    py, cy = _backend.python_kernels, _backend.compiled_kernels
    stream = random_stream(args.events, args.nodes)
    print(f"{'kernel':<22}{'python':>14}{'cython':>14}{'speed-up':>10}")
    for scheme in (Scheme.EDGE, Scheme.NODE):
        cfg = SamplerConfig(scheme, 10, 0.9)
        tp, a = time_replay(py, stream, cfg, args.nodes)
        tc, b = time_replay(cy, stream, cfg, args.nodes)
        assert a.state_equal(b), "backends disagree on replay"
        n = args.events
        print(f"{'replay/' + scheme.name.lower() + ' ns/event':<22}{tp / n * 1e9:>14.1f}"
              f"{tc / n * 1e9:>14.1f}{tp / tc:>9.1f}x")
    cfg = SamplerConfig(Scheme.EDGE, 10, 0.9)
    tp, a = time_retention(py, cfg, args.trials)
    tc, b = time_retention(cy, cfg, args.trials)
    assert np.array_equal(a, b), "backends disagree on retention counts"
    print(f"{'retention us/trial':<22}{tp / args.trials * 1e6:>14.2f}"
          f"{tc / args.trials * 1e6:>14.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
