"""Backward samplers over the full neighbor history.

These scan a node's stored interactions at query time, so their cost grows
with history length. They serve as baselines and as reference oracles for
the forward tables.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .stream import LinkStream


class Sampled(NamedTuple):
    nbr: np.ndarray
    ts: np.ndarray
    feat: np.ndarray

    def __len__(self) -> int:
        return len(self.nbr)


class _Column:
    __slots__ = ("buf", "n")

    def __init__(self):
        self.buf = np.empty((3, 8), dtype=np.int64)
        self.n = 0

    def append(self, nbr, ts, feat):
        if self.n == self.buf.shape[1]:
            grown = np.empty((3, 2 * self.n), dtype=np.int64)
            grown[:, : self.n] = self.buf
            self.buf = grown
        self.buf[:, self.n] = (nbr, ts, feat)
        self.n += 1

    def view(self):
        return self.buf[0, : self.n], self.buf[1, : self.n], self.buf[2, : self.n]


class HistoryStore:
    """Per-node append-only interaction lists (both endpoints record)."""

    def __init__(self, n_nodes: int):
        self.n_nodes = n_nodes
        self._cols: dict[int, _Column] = {}
        self.n_links = 0
        self._last_ts = None

    @classmethod
    def from_stream(cls, stream: LinkStream) -> "HistoryStore":
        store = cls(stream.n_nodes)
        n = len(stream)
        if n == 0:
            return store
        owner = np.empty(2 * n, dtype=np.int64)
        other = np.empty(2 * n, dtype=np.int64)
        owner[0::2], owner[1::2] = stream.src, stream.dst
        other[0::2], other[1::2] = stream.dst, stream.src
        ts = np.repeat(stream.ts, 2)
        feat = np.repeat(stream.feat_idx, 2)
        order = np.argsort(owner, kind="stable")
        owner, other, ts, feat = owner[order], other[order], ts[order], feat[order]
        cuts = np.flatnonzero(np.diff(owner)) + 1
        for lo, hi in zip(np.r_[0, cuts], np.r_[cuts, 2 * n]):
            col = _Column()
            col.buf = np.stack([other[lo:hi], ts[lo:hi], feat[lo:hi]])
            col.n = hi - lo
            store._cols[int(owner[lo])] = col
        store.n_links = n
        store._last_ts = int(stream.ts[-1])
        return store

    def append(self, src: int, dst: int, ts: int, feat: int = -1) -> None:
        if self._last_ts is not None and ts < self._last_ts:
            raise ValueError("history must be appended in time order")
        self._last_ts = ts
        self._cols.setdefault(src, _Column()).append(dst, ts, feat)
        self._cols.setdefault(dst, _Column()).append(src, ts, feat)
        self.n_links += 1

    def extend(self, stream: LinkStream) -> None:
        for i in range(len(stream)):
            self.append(int(stream.src[i]), int(stream.dst[i]), int(stream.ts[i]),
                        int(stream.feat_idx[i]))

    def history(self, u: int):
        col = self._cols.get(u)
        if col is None:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty, empty
        return col.view()

    def degree(self, u: int) -> int:
        col = self._cols.get(u)
        return 0 if col is None else col.n


def _pick(nbr, ts, feat, idx) -> Sampled:
    return Sampled(nbr[idx], ts[idx], feat[idx])


def sample_truncation(store: HistoryStore, u: int, t: int, s: int) -> Sampled:
    """The ``s`` latest entries strictly before ``t``, oldest first."""
    nbr, ts, feat = store.history(u)
    end = int(np.searchsorted(ts, t, side="left"))
    idx = np.arange(max(0, end - s), end)
    return _pick(nbr, ts, feat, idx)


def sample_uniform(store: HistoryStore, u: int, t: int, s: int,
                   rng: np.random.Generator) -> Sampled:
    """``s`` equal-probability draws without replacement from entries before ``t``."""
    nbr, ts, feat = store.history(u)
    cand = np.flatnonzero(ts < t)
    if len(cand) > s:
        cand = np.sort(rng.choice(cand, size=s, replace=False))
    return _pick(nbr, ts, feat, cand)


def recency_log_weights(ts: np.ndarray, t: int, c: float) -> np.ndarray:
    """``log exp(c (ts - t))`` shifted so the largest weight is 1."""
    lw = c * (ts.astype(np.float64) - float(t))
    return lw - lw.max() if len(lw) else lw


def sample_recent(store: HistoryStore, u: int, t: int, s: int, c: float,
                  rng: np.random.Generator) -> Sampled:
    """Weighted draws without replacement, weight ``exp(c (t' - t))``.

    Uses the exponential race: each entry gets ``E_i / w_i`` with
    ``E_i ~ Exp(1)`` and the ``s`` smallest keys win, compared in log space.
    """
    if c < 0:
        raise ValueError(f"recency constant must be >= 0, got {c}")
    nbr, ts, feat = store.history(u)
    cand = np.flatnonzero(ts < t)
    if len(cand) == 0:
        return _pick(nbr, ts, feat, cand)
    lw = recency_log_weights(ts[cand], t, c)
    keys = np.log(rng.exponential(size=len(cand))) - lw
    if len(cand) > s:
        chosen = np.argpartition(keys, s - 1)[:s] if s > 0 else np.empty(0, dtype=np.int64)
        cand = np.sort(cand[chosen])
    return _pick(nbr, ts, feat, cand)
