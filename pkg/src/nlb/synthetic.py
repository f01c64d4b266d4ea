"""Synthetic link streams for smoke tests and the recency benchmark."""

from __future__ import annotations

import numpy as np

from .stream import LinkStream


def _arrival_times(lam: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(lam * horizon)
    return np.sort(rng.uniform(0.0, horizon, size=n))


def gen_poisson_graph(n_nodes: int, lam: float, horizon: float, seed: int = 0,
                      resolution: float = 1000.0) -> LinkStream:
    """Links arrive at rate ``lam``; both endpoints uniform (no self-loops)."""
    rng = np.random.default_rng(seed)
    t = _arrival_times(lam, horizon, rng)
    src = rng.integers(0, n_nodes, size=len(t))
    dst = (src + rng.integers(1, n_nodes, size=len(t))) % n_nodes
    return LinkStream.from_arrays(src, dst, (t * resolution).astype(np.int64), n_nodes=n_nodes)


def gen_recency_task(n_nodes: int, lam: float, horizon: float, seed: int = 0,
                     p_recent: float = 0.8, resolution: float = 1000.0) -> LinkStream:
    """Stream where a node mostly returns to its latest partner.

    Sources are uniform. With probability ``p_recent`` the destination is
    the source's most recently seen neighbor (other than itself); otherwise,
    or when the source has no history, it is a uniform other node.
    """
    rng = np.random.default_rng(seed)
    t = _arrival_times(lam, horizon, rng)
    n = len(t)
    src = rng.integers(0, n_nodes, size=n)
    coin = rng.random(n)
    fresh = (src + rng.integers(1, n_nodes, size=n)) % n_nodes
    last = np.full(n_nodes, -1, dtype=np.int64)
    dst = np.empty(n, dtype=np.int64)
    for i in range(n):
        u = src[i]
        v = last[u] if coin[i] < p_recent and last[u] >= 0 else fresh[i]
        dst[i] = v
        last[u] = v
        last[v] = u
    return LinkStream.from_arrays(src, dst, (t * resolution).astype(np.int64), n_nodes=n_nodes)
