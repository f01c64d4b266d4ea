"""Forward recent sampling: per-node fixed-size hash tables.

Each node ``u`` owns ``s`` slots at ``u*s .. u*s+s-1`` of a flat table. A new
temporal neighbor is written to the slot chosen by hashing its key; an
occupied slot is overwritten with probability ``alpha``. Keys are either
``(neighbor, timestamp)`` (edge scheme) or the neighbor id alone (node
scheme).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._backend import kernels
from .rng import MASK64, CounterRNG
from .stream import LinkStream, TemporalLink

DEFAULT_Q1 = 1_000_000_007
DEFAULT_Q2 = 998_244_353


class Scheme(enum.IntEnum):
    EDGE = 0
    NODE = 1

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, Scheme):
            return value
        return cls[str(value).upper()]


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class SamplerConfig:
    scheme: Scheme = Scheme.EDGE
    s: int = 10
    alpha: float = 0.9
    q1: int = DEFAULT_Q1
    q2: int = DEFAULT_Q2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        for name in ("q1", "q2"):
            q = getattr(self, name)
            if not (0 < q <= MASK64 and _is_prime(q)):
                raise ValueError(f"{name}={q} is not a 64-bit prime")

    def validate_nodes(self, n_nodes: int) -> None:
        if self.q1 <= n_nodes or self.q2 <= n_nodes:
            raise ValueError(f"hash primes must exceed |V|={n_nodes}")


def hash_edge(v: int, t: int, cfg: SamplerConfig) -> int:
    """Slot of key ``(v, t)``: ``(q1*v + q2*t) mod s`` with 64-bit wrap."""
    if cfg.s < 1:
        raise ValueError("hash needs s >= 1")
    return ((cfg.q1 * (v & MASK64) + cfg.q2 * (t & MASK64)) & MASK64) % cfg.s


def hash_node(v: int, cfg: SamplerConfig) -> int:
    if cfg.s < 1:
        raise ValueError("hash needs s >= 1")
    return ((cfg.q1 * (v & MASK64)) & MASK64) % cfg.s


def _hash_array(v: np.ndarray, t: np.ndarray | None, cfg: SamplerConfig) -> np.ndarray:
    vv = np.asarray(v, dtype=np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        h = vv * np.uint64(cfg.q1)
        if t is not None:
            h = h + np.asarray(t, dtype=np.int64).view(np.uint64) * np.uint64(cfg.q2)
    return (h % np.uint64(cfg.s)).astype(np.int64)


class NeighborSlot(NamedTuple):
    slot: int
    nbr: int
    ts: int
    edge_feat: int | None


class NeighborTable:
    """Flat ``|V| x s`` slot arrays plus the sampler configuration.

    Writes happen only through ``update``/``batch_update``; readers must not
    overlap a batch update (predict, then update).
    """

    def __init__(self, n_nodes: int, cfg: SamplerConfig, rng: CounterRNG | None = None):
        cfg.validate_nodes(n_nodes)
        self.n_nodes = int(n_nodes)
        self.cfg = cfg
        self.rng = rng or CounterRNG(cfg.seed)
        size = self.n_nodes * cfg.s
        self.occupied = np.zeros(size, dtype=np.uint8)
        self.nbr = np.full(size, -1, dtype=np.int64)
        self.ts = np.zeros(size, dtype=np.int64)
        self.feat = np.full(size, -1, dtype=np.int64)
        self.last_ts: int | None = None

    @property
    def s(self) -> int:
        return self.cfg.s

    def reset(self) -> None:
        self.occupied[:] = 0
        self.nbr[:] = -1
        self.ts[:] = 0
        self.feat[:] = -1
        self.last_ts = None

    def copy(self) -> "NeighborTable":
        other = NeighborTable(self.n_nodes, self.cfg, self.rng)
        for name in ("occupied", "nbr", "ts", "feat"):
            getattr(other, name)[:] = getattr(self, name)
        other.last_ts = self.last_ts
        return other

    def slot_of(self, u: int, v: int, t: int) -> int:
        if self.cfg.scheme is Scheme.NODE:
            return u * self.s + hash_node(v, self.cfg)
        return u * self.s + hash_edge(v, t, self.cfg)

    def _check_time(self, t_first: int, t_last: int) -> None:
        if self.last_ts is not None and t_first < self.last_ts:
            raise ValueError(f"event at t={t_first} precedes applied t={self.last_ts}")
        self.last_ts = t_last

    def update(self, link: TemporalLink, rng: CounterRNG | None = None) -> None:
        """Insert both endpoints of one link (one slot read/written each)."""
        if self.s == 0:
            return
        self._check_time(link.ts, link.ts)
        rng = rng or self.rng
        f = -1 if link.edge_feat is None else link.edge_feat
        ends = [(link.src, link.dst, 0)]
        if link.dst != link.src:
            ends.append((link.dst, link.src, 1))
        for u, v, endpoint in ends:
            a = self.slot_of(u, v, link.ts)
            if self.occupied[a] and rng.event_uniform(link.event_idx, endpoint) >= self.cfg.alpha:
                continue
            self.occupied[a] = 1
            self.nbr[a] = v
            self.ts[a] = link.ts
            self.feat[a] = f

    def replay(self, links: LinkStream, rng: CounterRNG | None = None) -> None:
        """Sequential application through the kernel backend."""
        if self.s == 0 or len(links) == 0:
            return
        self._check_time(int(links.ts[0]), int(links.ts[-1]))
        rng = rng or self.rng
        kernels.replay(self.occupied, self.nbr, self.ts, self.feat,
                       links.src, links.dst, links.ts, links.feat_idx,
                       links.event_idx, self.s, self.cfg.scheme is Scheme.NODE,
                       float(self.cfg.alpha), self.cfg.q1, self.cfg.q2, rng.key)

    def batch_update(self, links: LinkStream, rng: CounterRNG | None = None) -> None:
        """Order-free batch write, equivalent to sequential replay.

        A write lands iff its slot was empty at first touch or its own coin
        is below alpha; the final content of each slot is the last landing
        write in event order. Every write is decided independently, so the
        per-slot reduction is the only ordered step.
        """
        if self.s == 0 or len(links) == 0:
            return
        self._check_time(int(links.ts[0]), int(links.ts[-1]))
        rng = rng or self.rng
        n = len(links)
        loop = links.src == links.dst
        owner = np.empty(2 * n, dtype=np.int64)
        other = np.empty(2 * n, dtype=np.int64)
        owner[0::2], owner[1::2] = links.src, links.dst
        other[0::2], other[1::2] = links.dst, links.src
        t = np.repeat(links.ts, 2)
        f = np.repeat(links.feat_idx, 2)
        ev = np.repeat(links.event_idx, 2)
        endpoint = np.tile(np.array([0, 1], dtype=np.int64), n)
        live = np.ones(2 * n, dtype=bool)
        live[1::2] = ~loop
        owner, other, t, f, ev, endpoint = (x[live] for x in (owner, other, t, f, ev, endpoint))

        if self.cfg.scheme is Scheme.NODE:
            slots = owner * self.s + _hash_array(other, None, self.cfg)
        else:
            slots = owner * self.s + _hash_array(other, t, self.cfg)
        accept = rng.event_uniforms(ev, endpoint) < self.cfg.alpha
        _, first = np.unique(slots, return_index=True)
        first = first[self.occupied[slots[first]] == 0]
        accept[first] = True

        k = np.flatnonzero(accept)
        rev = k[::-1]
        _, last = np.unique(slots[rev], return_index=True)
        win = rev[last]
        a = slots[win]
        self.occupied[a] = 1
        self.nbr[a] = other[win]
        self.ts[a] = t[win]
        self.feat[a] = f[win]

    def snapshot(self, u: int) -> list[NeighborSlot]:
        """Occupied entries of ``u`` in slot order; O(s), no mutation."""
        if not 0 <= u < self.n_nodes:
            raise KeyError(f"unknown node id {u}")
        base = u * self.s
        out = []
        for k in range(self.s):
            a = base + k
            if self.occupied[a]:
                f = int(self.feat[a])
                out.append(NeighborSlot(k, int(self.nbr[a]), int(self.ts[a]), None if f < 0 else f))
        return out

    def block(self, nodes: np.ndarray):
        """Vectorized snapshot: ``(occupied, nbr, ts, feat)`` each ``(B, s)``."""
        idx = np.asarray(nodes, dtype=np.int64)[:, None] * self.s + np.arange(self.s)
        return self.occupied[idx], self.nbr[idx], self.ts[idx], self.feat[idx]

    def state_equal(self, other: "NeighborTable") -> bool:
        occ = self.occupied.astype(bool)
        return (np.array_equal(self.occupied, other.occupied)
                and np.array_equal(self.nbr[occ], other.nbr[occ])
                and np.array_equal(self.ts[occ], other.ts[occ])
                and np.array_equal(self.feat[occ], other.feat[occ]))

    # checkpoint: magic, version, |V|, s, scheme, alpha, q1, q2, seed, last_ts
    _HEADER = struct.Struct("<4sIQIBdQQqq")
    _SLOT = np.dtype([("occ", "u1"), ("nbr", "<i8"), ("ts", "<i8"), ("feat", "<i8")])

    def save(self, path) -> None:
        recs = np.empty(len(self.occupied), dtype=self._SLOT)
        recs["occ"], recs["nbr"], recs["ts"], recs["feat"] = (
            self.occupied, self.nbr, self.ts, self.feat)
        last = self.last_ts if self.last_ts is not None else np.iinfo(np.int64).min
        with open(path, "wb") as fh:
            fh.write(self._HEADER.pack(b"NLBT", 1, self.n_nodes, self.s, int(self.cfg.scheme),
                                       self.cfg.alpha, self.cfg.q1, self.cfg.q2,
                                       self.cfg.seed, last))
            fh.write(recs.tobytes())

    @classmethod
    def load(cls, path) -> "NeighborTable":
        with open(path, "rb") as fh:
            buf = fh.read()
        magic, ver, n, s, scheme, alpha, q1, q2, seed, last = cls._HEADER.unpack_from(buf, 0)
        if magic != b"NLBT" or ver != 1:
            raise ValueError(f"{path}: not a table checkpoint")
        cfg = SamplerConfig(Scheme(scheme), s, alpha, q1, q2, seed)
        table = cls(n, cfg)
        recs = np.frombuffer(buf, dtype=cls._SLOT, count=n * s, offset=cls._HEADER.size)
        table.occupied[:] = recs["occ"]
        table.nbr[:] = recs["nbr"]
        table.ts[:] = recs["ts"]
        table.feat[:] = recs["feat"]
        table.last_ts = None if last == np.iinfo(np.int64).min else last
        return table
