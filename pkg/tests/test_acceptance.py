"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Lines are collected in ``RESULTS`` and echoed again in the terminal summary
(see ``conftest.py``), so they survive output capture.
"""

import dataclasses
import os
import time
from pathlib import Path

import numpy as np
import pytest

from nlb import metrics
from nlb.autodiff import grad_check
from nlb.model import ModelConfig, NLBModel
from nlb.sampler import NeighborTable, SamplerConfig, Scheme
from nlb.stats import (PoissonStreamSpec, bench_oracle_scaling, bench_update_scaling,
                       measure_retention_edge, measure_retention_node, theory_node)
from nlb.stream import LinkStream, chronological_split, load_stream
from nlb.synthetic import gen_recency_task
from nlb.train import TrainConfig, run_transductive, stream_loss, sweep

RESULTS: list[str] = []


def report(n: int, ok: bool | None, detail: str) -> None:
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"criterion {n}: {status}  {detail}"
    RESULTS.append(line)
    print(line)


def check(n: int, ok: bool, detail: str) -> None:
    report(n, ok, detail)
    assert ok, detail


def test_c1_edge_retention():
    cfg = SamplerConfig(Scheme.EDGE, 10, 0.9)
    t = time.perf_counter()
    curve = measure_retention_edge(cfg, PoissonStreamSpec(lam=2.0), 200_000, [1, 2, 5, 10])
    wall = time.perf_counter() - t
    err = curve.max_abs_error()
    bins = " ".join(f"{b.delta_t:g}:{b.empirical:.4f}/{b.theory:.4f}" for b in curve.bins)
    check(1, err <= 0.01 and wall < 60, f"max err {err:.4f} <= 0.01, {wall:.1f}s < 60s [{bins}]")


def test_c2_node_retention():
    # four neighbors at rate 1: the marked one and three competitors
    cfg = SamplerConfig(Scheme.NODE, 5, 0.8)
    lams = {0: 1.0, 1: 1.0, 2: 1.0, 3: 1.0}
    t = time.perf_counter()
    curve = measure_retention_node(cfg, PoissonStreamSpec(per_neighbor_lambdas=lams), 200_000, [2])
    wall = time.perf_counter() - t
    emp = curve.bins[0].empirical
    theory = float(theory_node(0.8, [1.0, 1.0, 1.0], 5, 2)[0])
    ok = abs(emp - theory) <= 0.02 and wall < 120 and abs(theory - 0.5935) < 1e-4
    check(2, ok, f"empirical {emp:.4f} vs product formula {theory:.4f} (tol 0.02), {wall:.1f}s")


def test_c3_constant_update_cost():
    # best of three runs per length: the machine may be shared
    runs = [bench_update_scaling(SamplerConfig(Scheme.EDGE, 10, 0.9), [10**4, 10**6], reps=5)
            for _ in range(3)]
    small, large = (min(r[i].mean_ns for r in runs) for i in (0, 1))
    upd = large / small
    orc = bench_oracle_scaling([10**4, 10**6], s=10)
    growth = orc[1].mean_ns / orc[0].mean_ns
    check(3, upd <= 2.0 and growth >= 10.0,
          f"forward update 1e6/1e4 = {upd:.2f}x (<= 2), uniform oracle growth {growth:.0f}x (>= 10)")


def test_c4_batch_equals_sequential():
    rng = np.random.default_rng(4)
    n = 100_000
    src = rng.integers(0, 500, n)
    dst = rng.integers(0, 500, n)
    ts = np.cumsum(rng.integers(0, 2, n))
    stream = LinkStream.from_arrays(src, dst, ts, n_nodes=500)
    ok = True
    for scheme in (Scheme.EDGE, Scheme.NODE):
        cfg = SamplerConfig(scheme, 10, 0.9, seed=11)
        ref = NeighborTable(500, cfg)
        ref.replay(stream)
        for b in (1, 7, 100):
            table = NeighborTable(500, cfg)
            for batch in stream.batches(b):
                table.batch_update(batch)
            ok &= table.state_equal(ref)
    check(4, ok, "batch sizes 1, 7, 100 bit-identical to replay over 1e5 events, both schemes")


def test_c5_gradient_check():
    rng = np.random.default_rng(7)
    src = rng.integers(0, 5, 20)
    dst = (src + rng.integers(1, 5, 20)) % 5
    ts = np.sort(rng.integers(0, 100, 20))
    stream = LinkStream.from_arrays(src, dst, ts, n_nodes=5)
    model = NLBModel(ModelConfig(4, 4, 4, 4, 2, 0, 2, 0.0, "float64", 0))
    # nonzero biases keep ReLU inputs off their kink; slow frequencies keep
    # the finite-difference truncation error small
    for name, p in model.params.items():
        if ".b" in name:
            p.data[:] = rng.normal(0, 0.1, p.shape)
    model.params["omega"].data[:] = rng.uniform(0.01, 0.1, (1, 2))
    neg = (dst + 1) % 5
    err = grad_check(lambda: stream_loss(model, stream, neg), model.parameters(),
                     h=1e-5, order=4, floor=1e-6)
    check(5, err < 1e-4, f"max relative error {err:.2e} < 1e-4 (float64, 5 nodes, 20 events)")


def _brute_auc(s, y):
    p, n = s[y == 1], s[y == 0]
    d = p[:, None] - n[None, :]
    return ((d > 0).sum() + 0.5 * (d == 0).sum()) / d.size


def _brute_ap(s, y):
    pos = np.flatnonzero(y == 1)
    above = s[None, :] >= s[pos][:, None]
    return float(np.mean((above & (y == 1)).sum(1) / above.sum(1)))


def test_c6_metric_oracles():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 501))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = rng.integers(0, int(rng.integers(2, 50)), n) / 7.0
        worst = max(worst, abs(metrics.roc_auc(s, y) - _brute_auc(s, y)),
                    abs(metrics.average_precision(s, y) - _brute_ap(s, y)))
        k = int(rng.integers(1, 30))
        pos = rng.integers(0, 5, 20).astype(float)
        negs = rng.integers(0, 5, (20, k)).astype(float)
        rr = 1.0 / (1 + (negs > pos[:, None]).sum(1) + 0.5 * (negs == pos[:, None]).sum(1))
        worst = max(worst, abs(metrics.mrr(pos, negs) - rr.mean()))
    check(6, worst < 1e-12, f"max deviation from O(n^2) definitions {worst:.1e} on 200 instances")


RECENCY_CFG = TrainConfig(lr=3e-4, batch_size=50, dropout=0.0, eval_negatives=1, epochs=5)


@pytest.mark.slow
def test_c7_recency_task():
    stream = gen_recency_task(1000, lam=2000.0, horizon=50.0, seed=0)
    with_nb, _ = run_transductive(stream, RECENCY_CFG)
    without, _ = run_transductive(stream, dataclasses.replace(RECENCY_CFG, s=0))
    gap = with_nb.auc - without.auc
    ok = with_nb.auc >= 0.85 and gap >= 0.05
    detail = (f"{len(stream)} events: s=10 AUC {with_nb.auc:.4f} (>= 0.85), "
              f"s=0 AUC {without.auc:.4f}, gap {gap:+.4f} (>= 0.05)")
    report(7, ok, detail)
    assert ok, detail


def test_c8_alpha_sweep():
    stream = gen_recency_task(40, lam=20.0, horizon=20.0, seed=8)
    base = TrainConfig(d_status=8, d_time=8, d_msg=8, d_out=8, batch_size=25, epochs=1,
                       eval_negatives=5)
    alphas = [0.2, 0.4, 0.6, 0.8, 1.0]
    a = sweep(stream, "alpha", alphas, base)
    b = sweep(stream, "alpha", alphas, base)
    complete = [v for v, _ in a] == alphas and all(np.isfinite(r.auc) for _, r in a)
    same = all(x.row() | {"test_s": 0, "latency_s": 0, "train_epoch_s": 0}
               == y.row() | {"test_s": 0, "latency_s": 0, "train_epoch_s": 0}
               for (_, x), (_, y) in zip(a, b))
    check(8, complete and same, f"{len(a)} alpha rows, finite and identical across two runs")


WIKI = Path(os.environ.get("NLB_WIKIPEDIA", "data/wikipedia.csv"))


@pytest.mark.slow
def test_c9_wikipedia_stretch():
    if not WIKI.exists():
        report(9, None, f"non-gating stretch run; {WIKI} not present (set NLB_WIKIPEDIA)")
        pytest.skip("public Wikipedia stream not present")
    stream = load_stream(WIKI)
    t = time.perf_counter()
    rep, _ = run_transductive(stream, TrainConfig(eval_negatives=1, epochs=1))
    minutes = (time.perf_counter() - t) / 60
    # recorded, not gating
    report(9, rep.auc >= 0.95 and minutes <= 30,
           f"Wikipedia transductive AUC {rep.auc:.4f} in {minutes:.1f} CPU-minutes (stretch)")
