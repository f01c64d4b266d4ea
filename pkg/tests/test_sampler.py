import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlb import _backend
from nlb.rng import CounterRNG
from nlb.sampler import (NeighborSlot, NeighborTable, SamplerConfig, Scheme, hash_edge,
                         hash_node)
from nlb.stream import LinkStream, TemporalLink

from conftest import make_stream


def cfg(**kw):
    return SamplerConfig(**kw)


def test_hash_edge_examples():
    assert hash_edge(0, 0, cfg(s=20)) == 0
    assert hash_edge(3, 0, cfg(s=7, q1=5, q2=11)) == 1
    assert hash_edge(5, 7, cfg(s=20)) == 6
    assert (5 * 1_000_000_007 + 7 * 998_244_353) % 20 == 6


def test_hash_node_examples():
    assert hash_node(0, cfg(s=5)) == 0
    assert hash_node(4, cfg(s=5, q1=7)) == 3
    c = SamplerConfig(s=6, q1=2, q2=3)
    c1 = object.__new__(SamplerConfig)
    object.__setattr__(c1, "__dict__", {**c.__dict__, "q1": 1})
    assert len({hash_node(2 + 6 * k, c1) for k in range(10)}) == 1


def test_hash_wraps_at_64_bits():
    v, t = 2**62, 2**61
    c = cfg(s=97)
    assert hash_edge(v, t, c) == ((c.q1 * v + c.q2 * t) % 2**64) % 97


def test_hash_rejects_zero_slots():
    with pytest.raises(ValueError):
        hash_edge(1, 1, cfg(s=0))
    with pytest.raises(ValueError):
        hash_node(1, cfg(s=0))


@pytest.mark.parametrize("kw", [dict(s=-1), dict(alpha=0.0), dict(alpha=1.5), dict(q1=12),
                                dict(q2=1_000_000_008)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SamplerConfig(**kw)


def test_primes_must_exceed_node_count():
    c = SamplerConfig(q1=5, q2=7)
    with pytest.raises(ValueError):
        c.validate_nodes(10)
    SamplerConfig().validate_nodes(10**6)


def _link(u, v, t, i, f=None):
    return TemporalLink(u, v, t, f, i)


def test_fresh_snapshot_empty_and_unknown_node():
    t = NeighborTable(4, cfg(s=3))
    assert t.snapshot(2) == []
    with pytest.raises(KeyError):
        t.snapshot(4)


def test_single_update_inserts_both_endpoints():
    c = cfg(s=5)
    t = NeighborTable(4, c)
    t.update(_link(1, 2, 10, 0, f=3))
    assert t.snapshot(1) == [NeighborSlot(hash_edge(2, 10, c), 2, 10, 3)]
    assert t.snapshot(2) == [NeighborSlot(hash_edge(1, 10, c), 1, 10, 3)]
    assert t.snapshot(0) == t.snapshot(3) == []


def test_self_loop_inserted_once():
    t = NeighborTable(3, cfg(s=4))
    t.update(_link(1, 1, 5, 0))
    assert len(t.snapshot(1)) == 1


def test_alpha_one_always_replaces():
    c = cfg(s=1, alpha=1.0)
    t = NeighborTable(3, c)
    for i, v in enumerate([1, 2, 1, 2]):
        t.update(_link(0, v, i, i))
        assert t.snapshot(0)[0].nbr == v


def test_replacement_frequency_matches_alpha():
    c = cfg(s=1, alpha=0.9, seed=11)
    rng = CounterRNG(c.seed)
    hits = 0
    n = 100_000
    for i in range(n):
        t = NeighborTable(2, c, rng)
        t.occupied[0] = 1
        t.nbr[0] = 1
        t.ts[0] = -1
        t.update(_link(0, 1, 0, i))
        hits += t.ts[0] == 0
    assert abs(hits / n - 0.9) < 0.005


def test_s_zero_is_a_noop():
    t = NeighborTable(3, cfg(s=0))
    t.update(_link(0, 1, 0, 0))
    t.batch_update(LinkStream.from_arrays([0], [1], [1], n_nodes=3))
    assert t.snapshot(0) == []


def test_many_events_on_one_node_fill_at_most_s_slots():
    n = 10_000
    rng = np.random.default_rng(0)
    # neighbor and time must not advance in lockstep: with the default primes
    # q1 + q2 = 0 (mod 10), so v = t + 1 would always hit the same slot
    nbr = rng.integers(1, 500, size=n)
    s = LinkStream.from_arrays(np.zeros(n, int), nbr, np.sort(rng.integers(0, 10**6, size=n)),
                               n_nodes=500)
    t = NeighborTable(500, cfg(s=10))
    t.replay(s)
    snap = t.snapshot(0)
    assert len(snap) == int(t.occupied[:10].sum()) == 10


def test_time_must_not_go_backwards():
    t = NeighborTable(3, cfg(s=2))
    t.update(_link(0, 1, 5, 0))
    with pytest.raises(ValueError):
        t.update(_link(0, 2, 4, 1))


def _sequential(stream, c):
    t = NeighborTable(stream.n_nodes, c)
    for link in stream:
        t.update(link)
    return t


@pytest.mark.parametrize("scheme", [Scheme.EDGE, Scheme.NODE])
def test_kernel_replay_matches_per_event_update(scheme):
    stream = make_stream(3000, 30, seed=4)
    c = cfg(scheme=scheme, s=4, alpha=0.7, seed=9)
    ref = _sequential(stream, c)
    t = NeighborTable(stream.n_nodes, c)
    t.replay(stream)
    assert t.state_equal(ref)


@pytest.mark.parametrize("scheme", [Scheme.EDGE, Scheme.NODE])
@pytest.mark.parametrize("bs", [1, 7, 100])
def test_batch_update_matches_replay(scheme, bs):
    stream = make_stream(5000, 40, seed=bs)
    c = cfg(scheme=scheme, s=3, alpha=0.6, seed=2)
    ref = NeighborTable(stream.n_nodes, c)
    ref.replay(stream)
    t = NeighborTable(stream.n_nodes, c)
    for batch in stream.batches(bs):
        t.batch_update(batch)
    assert t.state_equal(ref)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.integers(1, 8), st.integers(1, 5), st.integers(1, 50),
       st.floats(0.05, 1.0), st.booleans(), st.integers(0, 2**32))
def test_batch_equivalence_property(n, n_nodes, s, bs, alpha, node, seed):
    stream = make_stream(n, n_nodes, seed=seed)
    c = cfg(scheme=Scheme.NODE if node else Scheme.EDGE, s=s, alpha=alpha, seed=seed)
    ref = _sequential(stream, c)
    t = NeighborTable(n_nodes, c)
    for batch in stream.batches(bs):
        t.batch_update(batch)
    assert t.state_equal(ref)


def test_same_slot_in_batch_sees_earlier_occupancy():
    c = cfg(s=1, alpha=0.5, seed=3)
    # both events land in node 0's only slot; the second must face the coin
    stream = LinkStream.from_arrays([0, 0], [1, 2], [1, 1], n_nodes=3)
    t = NeighborTable(3, c)
    t.batch_update(stream)
    coin = CounterRNG(c.seed).event_uniform(1, 0)
    assert t.snapshot(0)[0].nbr == (2 if coin < 0.5 else 1)


@pytest.mark.parametrize("scheme", [Scheme.EDGE, Scheme.NODE])
def test_slot_address_determinism_and_node_uniqueness(scheme):
    stream = make_stream(4000, 25, seed=8)
    c = cfg(scheme=scheme, s=6, alpha=0.8)
    t = NeighborTable(stream.n_nodes, c)
    t.replay(stream)
    for u in range(stream.n_nodes):
        snap = t.snapshot(u)
        for e in snap:
            assert t.slot_of(u, e.nbr, e.ts) == u * c.s + e.slot
            assert e.ts <= stream.ts[-1]
        if scheme is Scheme.NODE:
            ids = [e.nbr for e in snap]
            assert len(ids) == len(set(ids))


def test_checkpoint_round_trip(tmp_path):
    stream = make_stream(500, 10, seed=1)
    t = NeighborTable(10, cfg(s=4, seed=5))
    t.replay(stream)
    t.save(tmp_path / "t.bin")
    back = NeighborTable.load(tmp_path / "t.bin")
    assert back.state_equal(t) and back.cfg == t.cfg and back.last_ts == t.last_ts


def test_block_matches_snapshot():
    stream = make_stream(300, 6, seed=2)
    t = NeighborTable(6, cfg(s=3))
    t.replay(stream)
    occ, nbr, ts, _ = t.block(np.array([4, 1]))
    for row, u in enumerate([4, 1]):
        snap = t.snapshot(u)
        assert [int(x) for x in nbr[row][occ[row] == 1]] == [e.nbr for e in snap]


@pytest.mark.skipif(_backend.compiled_kernels is None, reason="compiled kernels not built")
def test_backends_agree():
    stream = make_stream(20_000, 100, seed=6)
    c = cfg(s=5, alpha=0.9, seed=4)
    tabs = []
    for k in (_backend.python_kernels, _backend.compiled_kernels):
        t = NeighborTable(100, c)
        k.replay(t.occupied, t.nbr, t.ts, t.feat, stream.src, stream.dst, stream.ts,
                 stream.feat_idx, stream.event_idx, c.s, False, c.alpha, c.q1, c.q2, t.rng.key)
        tabs.append(t)
    assert tabs[0].state_equal(tabs[1])
