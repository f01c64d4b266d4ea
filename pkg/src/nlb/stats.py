"""Monte-Carlo checks of table retention laws and the update-cost benchmark."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import _backend
from .oracle import HistoryStore, sample_uniform
from .rng import stream_key
from .sampler import NeighborTable, SamplerConfig, Scheme
from .stream import LinkStream

DEFAULT_POOL = 10_000
TIME_RESOLUTION = 1000.0


@dataclass
class PoissonStreamSpec:
    lam: float = 2.0
    horizon: float = 50.0
    per_neighbor_lambdas: Mapping[int, float] | None = None
    pool: int = DEFAULT_POOL

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        rates = [self.lam] if self.per_neighbor_lambdas is None else list(self.per_neighbor_lambdas.values())
        if not rates or any(r <= 0 for r in rates):
            raise ValueError("all intensities must be > 0")


class PoissonEvents(NamedTuple):
    t: np.ndarray
    nbr: np.ndarray


def gen_poisson_stream(spec: PoissonStreamSpec, rng: np.random.Generator) -> PoissonEvents:
    """Events for one center node up to ``spec.horizon``.

    Gaps are i.i.d. exponential. With per-neighbor rates the merged process
    has rate ``sum(lambda_v)`` and each event belongs to ``v`` with
    probability ``lambda_v / sum``; otherwise neighbors are uniform over the
    pool.
    """
    if spec.per_neighbor_lambdas is None:
        rate = spec.lam
    else:
        ids = np.fromiter(spec.per_neighbor_lambdas.keys(), dtype=np.int64)
        lams = np.fromiter(spec.per_neighbor_lambdas.values(), dtype=np.float64)
        rate = float(lams.sum())
    times = []
    t = 0.0
    chunk = max(16, int(rate * spec.horizon * 1.2) + 16)
    while True:
        gaps = rng.exponential(1.0 / rate, size=chunk)
        cum = t + np.cumsum(gaps)
        keep = cum[cum < spec.horizon]
        times.append(keep)
        if len(keep) < chunk:
            break
        t = float(cum[-1])
    t_all = np.concatenate(times) if times else np.empty(0)
    if spec.per_neighbor_lambdas is None:
        nbr = rng.integers(0, spec.pool, size=len(t_all))
    else:
        nbr = ids[rng.choice(len(ids), size=len(t_all), p=lams / rate)]
    return PoissonEvents(t_all, nbr.astype(np.int64))


def theory_edge(alpha: float, lam: float, s: int, delta) -> np.ndarray:
    return np.exp(-alpha * lam * np.asarray(delta, dtype=np.float64) / s)


def theory_node(alpha: float, competitor_lams: Sequence[float], s: int, delta) -> np.ndarray:
    """Product over competitors of ``(s-1)/s + exp(-alpha*lam_j*delta)/s``."""
    d = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    out = np.ones_like(d)
    for lj in competitor_lams:
        out *= (s - 1) / s + np.exp(-alpha * lj * d) / s
    return out


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


class RetentionBin(NamedTuple):
    delta_t: float
    empirical: float
    theory: float
    ci_low: float
    ci_high: float
    trials: int


@dataclass
class RetentionCurve:
    bins: list[RetentionBin] = field(default_factory=list)
    scheme: str = "edge"
    elapsed_s: float = 0.0

    def max_abs_error(self) -> float:
        return max((abs(b.empirical - b.theory) for b in self.bins), default=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["delta_t", "empirical", "theory", "ci_low", "ci_high", "trials"])
            for b in self.bins:
                w.writerow([repr(b.delta_t), f"{b.empirical:.6f}", f"{b.theory:.6f}",
                            f"{b.ci_low:.6f}", f"{b.ci_high:.6f}", b.trials])

    def gnuplot_script(self, csv_path: str) -> str:
        return (
            "set datafile separator ','\n"
            "set key top right\nset xlabel 'delta t'\nset ylabel 'retention'\n"
            f"plot '{csv_path}' every ::1 using 1:2:4:5 with yerrorbars title 'empirical', \\\n"
            f"     '{csv_path}' every ::1 using 1:3 with lines title 'theory'\n"
        )


def _run_chunks(fn, trials: int, threads: int) -> np.ndarray:
    threads = max(1, int(threads))
    edges = np.linspace(0, trials, threads + 1).astype(np.int64)
    spans = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    if threads == 1 or len(spans) == 1:
        return sum(fn(a, b) for a, b in spans)
    with ThreadPoolExecutor(threads) as pool:
        return sum(pool.map(lambda ab: fn(*ab), spans))


def _curve(deltas, counts, trials, theory, scheme, t0) -> RetentionCurve:
    bins = []
    for d, k, th in zip(deltas, counts, theory):
        lo, hi = wilson_interval(int(k), trials)
        bins.append(RetentionBin(float(d), int(k) / trials, float(th), lo, hi, trials))
    return RetentionCurve(bins, scheme, time.perf_counter() - t0)


def measure_retention_edge(cfg: SamplerConfig, spec: PoissonStreamSpec, trials: int,
                           probe_deltas: Sequence[float], warmup: float | None = None,
                           threads: int = 1, kernels=None) -> RetentionCurve:
    """Empirical survival of an entry forced into a center node's table.

    Each trial replays a Poisson stream (neighbors uniform over
    ``spec.pool``), marks the first event after the warm-up, and records
    whether its slot is overwritten within each probe delta.
    """
    if cfg.scheme is not Scheme.EDGE:
        raise ValueError("measure_retention_edge needs the EDGE scheme")
    if cfg.s < 1:
        raise ValueError("retention needs s >= 1")
    k = kernels or _backend.kernels
    t0 = time.perf_counter()
    order = np.argsort(probe_deltas, kind="stable")
    deltas = np.asarray(probe_deltas, dtype=np.float64)[order]
    warm = warmup if warmup is not None else 2.0 * cfg.s / spec.lam
    key = stream_key(cfg.seed, 1)

    def chunk(a, b):
        return k.retention_edge(float(cfg.alpha), float(spec.lam), cfg.s, cfg.q1, cfg.q2,
                                int(spec.pool), float(warm), deltas, TIME_RESOLUTION,
                                key, a, b)

    counts = _run_chunks(chunk, trials, threads)
    theory = theory_edge(cfg.alpha, spec.lam, cfg.s, deltas)
    return _curve(deltas, counts, trials, theory, "edge", t0)


def measure_retention_node(cfg: SamplerConfig, spec: PoissonStreamSpec, trials: int,
                           probe_deltas: Sequence[float], warmup: float = 10.0,
                           id_space: int = 1 << 40, threads: int = 1,
                           kernels=None) -> RetentionCurve:
    """Survival of a marked neighbor under id-keyed hashing.

    The first entry of ``spec.per_neighbor_lambdas`` is the marked neighbor;
    the others compete for its slot. Neighbor ids are redrawn every trial
    from ``[0, id_space)``.
    """
    if cfg.scheme is not Scheme.NODE:
        raise ValueError("measure_retention_node needs the NODE scheme")
    if not spec.per_neighbor_lambdas:
        raise ValueError("node retention needs an explicit neighbor pool")
    if cfg.s < 1:
        raise ValueError("retention needs s >= 1")
    k = kernels or _backend.kernels
    t0 = time.perf_counter()
    deltas = np.sort(np.asarray(probe_deltas, dtype=np.float64))
    lams = np.fromiter(spec.per_neighbor_lambdas.values(), dtype=np.float64)
    key = stream_key(cfg.seed, 2)

    def chunk(a, b):
        return k.retention_node(float(cfg.alpha), lams, cfg.s, cfg.q1, int(id_space),
                                float(warmup), deltas, TIME_RESOLUTION, key, a, b)

    counts = _run_chunks(chunk, trials, threads)
    theory = theory_node(cfg.alpha, lams[1:], cfg.s, deltas)
    return _curve(deltas, counts, trials, theory, "node", t0)


class ScalingRow(NamedTuple):
    n: int
    mean_ns: float
    std_ns: float


def random_stream(n: int, n_nodes: int, seed: int = 0) -> LinkStream:
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n_nodes, size=n)
    dst = rng.integers(0, n_nodes, size=n)
    ts = np.cumsum(rng.integers(0, 3, size=n))
    return LinkStream.from_arrays(src, dst, ts, n_nodes=n_nodes)


def bench_update_scaling(cfg: SamplerConfig, stream_lengths=(10**4, 10**5, 10**6),
                         reps: int = 5, n_nodes: int = 1000, kernels=None) -> list[ScalingRow]:
    """Mean wall-clock cost per applied event for growing stream lengths.

    The table has a fixed ``n_nodes x s`` footprint, so a constant
    per-event cost is the expected outcome.
    """
    k = kernels or _backend.kernels
    rows = []
    for n in stream_lengths:
        stream = random_stream(n, n_nodes, seed=n)
        table = NeighborTable(n_nodes, cfg)
        args = (stream.src, stream.dst, stream.ts, stream.feat_idx, stream.event_idx,
                cfg.s, cfg.scheme is Scheme.NODE, float(cfg.alpha), cfg.q1, cfg.q2,
                table.rng.key)
        k.replay(table.occupied, table.nbr, table.ts, table.feat, *args)  # warm-up
        per = []
        for _ in range(reps):
            table.reset()
            t0 = time.perf_counter_ns()
            k.replay(table.occupied, table.nbr, table.ts, table.feat, *args)
            per.append((time.perf_counter_ns() - t0) / n)
        rows.append(ScalingRow(n, float(np.mean(per)), float(np.std(per))))
    return rows


def bench_oracle_scaling(history_lengths=(10**4, 10**6), s: int = 10, queries: int = 20,
                         seed: int = 0) -> list[ScalingRow]:
    """Per-query cost of the uniform backward sampler on one node's history."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in history_lengths:
        ts = np.arange(n, dtype=np.int64)
        store = HistoryStore.from_stream(
            LinkStream.from_arrays(np.zeros(n, dtype=np.int64), 1 + ts, ts, n_nodes=n + 1))
        sample_uniform(store, 0, n, s, rng)
        per = []
        for _ in range(queries):
            t0 = time.perf_counter_ns()
            sample_uniform(store, 0, n, s, rng)
            per.append(time.perf_counter_ns() - t0)
        rows.append(ScalingRow(n, float(np.mean(per)), float(np.std(per))))
    return rows
