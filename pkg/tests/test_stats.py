import math

import numpy as np
import pytest

from nlb import _backend
from nlb.sampler import SamplerConfig, Scheme
from nlb.stats import (PoissonStreamSpec, RetentionCurve, bench_update_scaling,
                       gen_poisson_stream, measure_retention_edge, measure_retention_node,
                       theory_edge, theory_node, wilson_interval)


def test_poisson_mean_count():
    rng = np.random.default_rng(0)
    spec = PoissonStreamSpec(lam=2, horizon=50)
    counts = [len(gen_poisson_stream(spec, rng).t) for _ in range(10_000)]
    assert abs(np.mean(counts) - 100) < 1


def test_poisson_zero_horizon_empty():
    ev = gen_poisson_stream(PoissonStreamSpec(horizon=0), np.random.default_rng(0))
    assert len(ev.t) == 0


def test_superposition_ratio():
    spec = PoissonStreamSpec(horizon=25_000, per_neighbor_lambdas={1: 1.0, 2: 3.0})
    ev = gen_poisson_stream(spec, np.random.default_rng(1))
    assert len(ev.nbr) > 10**5 * 0.9
    assert abs((ev.nbr == 2).mean() - 0.75) < 0.01


def test_bad_intensity():
    with pytest.raises(ValueError):
        PoissonStreamSpec(lam=0)
    with pytest.raises(ValueError):
        PoissonStreamSpec(per_neighbor_lambdas={1: -1.0})


def test_theory_values():
    assert theory_edge(0.9, 2, 10, 5) == pytest.approx(0.40657, abs=1e-5)
    assert theory_edge(0.9, 2, 10, 0) == 1.0
    assert theory_node(0.8, [], 5, [0, 3])[1] == 1.0
    # three competitors at rate 1: (0.8 + 0.2 e^-1.6)^3
    val = theory_node(0.8, [1, 1, 1], 5, 2)[0]
    assert val == pytest.approx((0.8 + 0.2 * math.exp(-1.6)) ** 3, rel=1e-12)
    assert val == pytest.approx(0.59351, abs=1e-5)
    assert theory_node(0.8, [1, 1, 1], 10**9, 2)[0] == pytest.approx(1.0, abs=1e-8)


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(40, 100)
    assert lo < 0.4 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_edge_retention_small_run():
    cfg = SamplerConfig(Scheme.EDGE, 10, 0.9, seed=1)
    curve = measure_retention_edge(cfg, PoissonStreamSpec(lam=2), 20_000, [0, 1, 2, 5, 10])
    emp = [b.empirical for b in curve.bins]
    assert emp[0] == 1.0
    assert curve.max_abs_error() < 0.02
    # non-increasing within 3 standard errors
    se = [math.sqrt(max(p * (1 - p), 1e-12) / 20_000) for p in emp]
    for i in range(1, len(emp)):
        assert emp[i] <= emp[i - 1] + 3 * se[i]


def test_retention_is_deterministic_and_thread_invariant():
    cfg = SamplerConfig(Scheme.EDGE, 10, 0.9, seed=5)
    a = measure_retention_edge(cfg, PoissonStreamSpec(lam=2), 5000, [1, 5])
    b = measure_retention_edge(cfg, PoissonStreamSpec(lam=2), 5000, [1, 5], threads=3)
    assert [x.empirical for x in a.bins] == [x.empirical for x in b.bins]


def test_single_slot_full_replacement_kills_entry():
    cfg = SamplerConfig(Scheme.EDGE, 1, 1.0, seed=2)
    curve = measure_retention_edge(cfg, PoissonStreamSpec(lam=2), 2000, [50.0], warmup=1.0)
    assert curve.bins[0].empirical == 0.0


def test_node_retention_no_competitors():
    cfg = SamplerConfig(Scheme.NODE, 5, 0.8, seed=3)
    spec = PoissonStreamSpec(per_neighbor_lambdas={0: 1.0})
    curve = measure_retention_node(cfg, spec, 2000, [2.0])
    assert curve.bins[0].theory == 1.0 and curve.bins[0].empirical == 1.0


def test_node_retention_small_run():
    cfg = SamplerConfig(Scheme.NODE, 5, 0.8, seed=4)
    spec = PoissonStreamSpec(per_neighbor_lambdas={i: 1.0 for i in range(4)})
    curve = measure_retention_node(cfg, spec, 20_000, [2.0])
    assert abs(curve.bins[0].empirical - 0.59351) < 0.02


def test_scheme_mismatch_rejected():
    with pytest.raises(ValueError):
        measure_retention_edge(SamplerConfig(Scheme.NODE), PoissonStreamSpec(), 10, [1])
    with pytest.raises(ValueError):
        measure_retention_node(SamplerConfig(Scheme.EDGE), PoissonStreamSpec(), 10, [1])


@pytest.mark.skipif(_backend.compiled_kernels is None, reason="compiled kernels not built")
def test_retention_backends_agree():
    cfg = SamplerConfig(Scheme.EDGE, 10, 0.9, seed=7)
    spec = PoissonStreamSpec(lam=2)
    a = measure_retention_edge(cfg, spec, 500, [1, 5], kernels=_backend.python_kernels)
    b = measure_retention_edge(cfg, spec, 500, [1, 5], kernels=_backend.compiled_kernels)
    assert a.bins == b.bins or [x.empirical for x in a.bins] == [x.empirical for x in b.bins]


def test_curve_csv_and_script(tmp_path):
    cfg = SamplerConfig(Scheme.EDGE, 10, 0.9)
    curve = measure_retention_edge(cfg, PoissonStreamSpec(), 500, [1, 2])
    p = tmp_path / "c.csv"
    curve.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "delta_t,empirical,theory,ci_low,ci_high,trials"
    assert len(lines) == 3
    assert "plot" in curve.gnuplot_script(str(p))


def test_update_cost_independent_of_s():
    rows = {}
    for s in (10, 20):
        cfg = SamplerConfig(Scheme.EDGE, s, 0.9)
        rows[s] = bench_update_scaling(cfg, [200_000], reps=3)[0].mean_ns
    assert rows[20] < 2.0 * rows[10]
