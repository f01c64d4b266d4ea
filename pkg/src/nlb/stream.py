"""Link-stream ingestion, caching, and chronological splits."""

from __future__ import annotations

import bisect
import csv
import hashlib
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np


class StreamError(ValueError):
    """Raised for malformed or non-chronological input."""


class TemporalLink(NamedTuple):
    src: int
    dst: int
    ts: int
    edge_feat: int | None
    event_idx: int


class NodeLabelEvent(NamedTuple):
    node: int
    ts: int
    label: int


@dataclass
class EdgeFeatureStore:
    """Dense per-event feature rows; ``dim == 0`` for featureless data."""

    rows: np.ndarray

    @classmethod
    def empty(cls, n: int = 0) -> "EdgeFeatureStore":
        return cls(np.zeros((n, 0), dtype=np.float32))

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def take(self, idx: np.ndarray) -> np.ndarray:
        """Rows for feature indices; index -1 yields a zero row."""
        idx = np.asarray(idx, dtype=np.int64)
        out = np.zeros((len(idx), self.dim), dtype=self.rows.dtype)
        if self.dim:
            ok = idx >= 0
            out[ok] = self.rows[idx[ok]]
        return out


@dataclass
class CsvSchema:
    """How to read a ``src,dst,ts,label,f1..fk`` file.

    ``bipartite`` puts source and destination ids in separate namespaces
    (JODIE-style user/item files reuse small integers on both sides).
    """

    scale: float = 1.0
    bipartite: bool = False
    header: bool | None = None  # None: autodetect
    label_column: bool = True


@dataclass
class LinkStream:
    src: np.ndarray
    dst: np.ndarray
    ts: np.ndarray
    feat_idx: np.ndarray
    event_idx: np.ndarray
    n_nodes: int
    features: EdgeFeatureStore = field(default_factory=EdgeFeatureStore.empty)
    labels: list[NodeLabelEvent] = field(default_factory=list)
    id_map: dict[str, int] | None = None

    def __post_init__(self):
        for name in ("src", "dst", "ts", "feat_idx", "event_idx"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))

    @classmethod
    def from_arrays(cls, src, dst, ts, n_nodes=None, features=None,
                    labels=None) -> "LinkStream":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        ts = np.asarray(ts, dtype=np.int64)
        n = len(src)
        if np.any(np.diff(ts) < 0):
            bad = int(np.flatnonzero(np.diff(ts) < 0)[0]) + 1
            raise StreamError(f"timestamps decrease at event {bad}")
        if features is None:
            features = EdgeFeatureStore.empty(n)
        if features.dim == 0:
            fidx = np.full(n, -1, dtype=np.int64)
        else:
            fidx = np.arange(n, dtype=np.int64)
        if n_nodes is None:
            n_nodes = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
        return cls(src, dst, ts, fidx, np.arange(n), n_nodes, features,
                   list(labels or []))

    def __len__(self) -> int:
        return len(self.src)

    def __getitem__(self, key) -> "LinkStream":
        if not isinstance(key, slice):
            raise TypeError("LinkStream supports slicing; use .link(i) for one event")
        return self.take(np.arange(len(self))[key])

    def take(self, idx: np.ndarray) -> "LinkStream":
        idx = np.asarray(idx, dtype=np.int64)
        return LinkStream(self.src[idx], self.dst[idx], self.ts[idx],
                          self.feat_idx[idx], self.event_idx[idx],
                          self.n_nodes, self.features, self.labels, self.id_map)

    def link(self, i: int) -> TemporalLink:
        f = int(self.feat_idx[i])
        return TemporalLink(int(self.src[i]), int(self.dst[i]), int(self.ts[i]),
                            None if f < 0 else f, int(self.event_idx[i]))

    def __iter__(self) -> Iterator[TemporalLink]:
        for i in range(len(self)):
            yield self.link(i)

    def batches(self, size: int) -> Iterator["LinkStream"]:
        for a in range(0, len(self), size):
            yield self.take(np.arange(a, min(a + size, len(self))))

    def nodes(self) -> np.ndarray:
        return np.union1d(self.src, self.dst)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.src, self.dst, self.ts):
            h.update(arr.astype("<i8").tobytes())
        h.update(np.ascontiguousarray(self.features.rows, dtype="<f4").tobytes())
        return h.hexdigest()[:16]


def _parse_ts(token: str, scale: float) -> int:
    token = token.strip()
    try:
        if scale == 1:
            return int(token)
    except ValueError:
        pass
    return int(math.trunc(float(token) * scale))


def _looks_like_header(row: list[str]) -> bool:
    try:
        float(row[2])
    except (ValueError, IndexError):
        return True
    return False


def ingest_csv(path, schema: CsvSchema | None = None) -> LinkStream:
    """Read a link file, densifying node ids in order of first appearance.

    Raises:
        StreamError: on decreasing timestamps or ragged feature rows, with
            the 1-based line number of the offending row.
    """
    schema = schema or CsvSchema()
    id_map: dict[str, int] = {}
    src, dst, ts, feats, labels = [], [], [], [], []
    k = None
    last_ts = None

    def dense(tok: str) -> int:
        if tok not in id_map:
            id_map[tok] = len(id_map)
        return id_map[tok]

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and (schema.header or (schema.header is None and _looks_like_header(row))):
                continue
            if len(row) < 3:
                raise StreamError(f"line {lineno}: expected at least src,dst,ts")
            t = _parse_ts(row[2], schema.scale)
            if last_ts is not None and t < last_ts:
                raise StreamError(f"line {lineno}: timestamp {t} decreases (previous {last_ts})")
            last_ts = t
            fstart = 4 if schema.label_column else 3
            frow = row[fstart:]
            if k is None:
                k = len(frow)
            elif len(frow) != k:
                raise StreamError(f"line {lineno}: {len(frow)} features, expected {k}")
            s_tok = row[0].strip()
            d_tok = row[1].strip()
            u = dense(s_tok)
            v = dense("dst:" + d_tok if schema.bipartite else d_tok)
            src.append(u)
            dst.append(v)
            ts.append(t)
            if frow:
                feats.append([float(x) for x in frow])
            if schema.label_column and len(row) > 3 and row[3].strip() != "":
                labels.append(NodeLabelEvent(u, t, int(float(row[3]))))
    n = len(src)
    if k:
        store = EdgeFeatureStore(np.asarray(feats, dtype=np.float32).reshape(n, k))
        fidx = np.arange(n, dtype=np.int64)
    else:
        store = EdgeFeatureStore.empty(n)
        fidx = np.full(n, -1, dtype=np.int64)
    return LinkStream(np.asarray(src), np.asarray(dst), np.asarray(ts), fidx,
                      np.arange(n), len(id_map), store, labels, id_map)


def write_csv(stream: LinkStream, path) -> None:
    """Emit a stream in the ingestion format (dense ids, one label column).

    A link whose source carries a label event at the same timestamp and
    position is written with that label; other rows leave it empty.
    """
    pending = {}
    for lab in stream.labels:
        pending.setdefault((lab.node, lab.ts), []).append(lab.label)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i in range(len(stream)):
            u, v, t = int(stream.src[i]), int(stream.dst[i]), int(stream.ts[i])
            queue = pending.get((u, t))
            lab = str(queue.pop(0)) if queue else ""
            f = int(stream.feat_idx[i])
            frow = [repr(float(x)) for x in stream.features.rows[f]] if f >= 0 else []
            w.writerow([u, v, t, lab, *frow])


def write_id_map(id_map: dict[str, int], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["raw_id", "dense_id"])
        for raw, dense in id_map.items():
            w.writerow([raw, dense])


def read_id_map(path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        return {raw: int(d) for raw, d in r}


# little-endian cache: magic, version, n_links, n_nodes, feat_dim, n_labels
_CACHE_MAGIC = b"NLBC"
_CACHE_HEADER = struct.Struct("<4sIQQIQ")
_LINK_DTYPE = np.dtype([("src", "<i8"), ("dst", "<i8"), ("ts", "<i8"), ("feat", "<i8")])
_LABEL_DTYPE = np.dtype([("node", "<i8"), ("ts", "<i8"), ("label", "<i8")])


def save_cache(stream: LinkStream, path) -> None:
    recs = np.empty(len(stream), dtype=_LINK_DTYPE)
    recs["src"], recs["dst"], recs["ts"], recs["feat"] = (
        stream.src, stream.dst, stream.ts, stream.feat_idx)
    labs = np.array([tuple(x) for x in stream.labels], dtype=_LABEL_DTYPE)
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(_CACHE_MAGIC, 1, len(stream), stream.n_nodes,
                                    stream.features.dim, len(labs)))
        fh.write(recs.tobytes())
        fh.write(np.ascontiguousarray(stream.features.rows, dtype="<f4").tobytes())
        fh.write(labs.tobytes())


def load_cache(path) -> LinkStream:
    buf = Path(path).read_bytes()
    magic, version, n, n_nodes, dim, n_lab = _CACHE_HEADER.unpack_from(buf, 0)
    if magic != _CACHE_MAGIC or version != 1:
        raise StreamError(f"{path}: not a link cache")
    off = _CACHE_HEADER.size
    recs = np.frombuffer(buf, dtype=_LINK_DTYPE, count=n, offset=off)
    off += recs.nbytes
    rows = np.frombuffer(buf, dtype="<f4", count=n * dim, offset=off).reshape(n, dim)
    off += rows.nbytes
    labs = np.frombuffer(buf, dtype=_LABEL_DTYPE, count=n_lab, offset=off)
    feats = EdgeFeatureStore(rows.astype(np.float32))
    if dim == 0:
        feats = EdgeFeatureStore.empty(n)
    return LinkStream(recs["src"], recs["dst"], recs["ts"], recs["feat"],
                      np.arange(n), int(n_nodes), feats,
                      [NodeLabelEvent(int(a), int(b), int(c)) for a, b, c in labs])


def load_stream(path, schema: CsvSchema | None = None) -> LinkStream:
    """Load either a binary cache or a CSV file, by extension."""
    if str(path).endswith((".bin", ".nlbc")):
        return load_cache(path)
    return ingest_csv(path, schema)


@dataclass(frozen=True)
class SplitView:
    """Chronological event ranges plus the inductive node mask."""

    n_events: int
    train: range
    val: range
    test: range
    masked_nodes: frozenset = frozenset()

    def train_indices(self, stream: LinkStream) -> np.ndarray:
        """Training event indices; links touching masked nodes are removed."""
        idx = np.arange(self.train.start, self.train.stop)
        if not self.masked_nodes:
            return idx
        masked = np.fromiter(self.masked_nodes, dtype=np.int64)
        keep = ~(np.isin(stream.src[idx], masked) | np.isin(stream.dst[idx], masked))
        return idx[keep]


def chronological_split(stream, ratios=(0.70, 0.15, 0.15)) -> SplitView:
    n = len(stream)
    if n == 0:
        raise StreamError("cannot split an empty stream")
    fr = [Fraction(repr(float(r))) for r in ratios]
    if len(fr) != 3 or sum(fr) != 1:
        raise StreamError(f"ratios must be three values summing to 1, got {ratios}")
    a = math.floor(fr[0] * n)
    b = math.floor((fr[0] + fr[1]) * n)
    if n == 1:
        a, b = 1, 1
    return SplitView(n, range(0, a), range(a, b), range(b, n))


def inductive_mask(split: SplitView, stream: LinkStream, p: float = 0.1,
                   seed: int = 0) -> SplitView:
    """Mask each unique val/test node independently with probability ``p``."""
    held = np.arange(split.val.start, split.test.stop)
    cand = np.union1d(stream.src[held], stream.dst[held])
    draws = np.random.default_rng(seed).random(len(cand))
    masked = frozenset(int(x) for x in cand[draws < p])
    return SplitView(split.n_events, split.train, split.val, split.test, masked)


class LabelledLink(NamedTuple):
    event_idx: int
    node: int
    side: str  # "src" or "dst"
    label: int
    label_ts: int


def assign_labels_to_links(stream: LinkStream, labels) -> tuple[list[LabelledLink], int]:
    """Attach each label to the node's first link at or after the label time.

    Returns the prediction events (ordered by event index, then label order)
    and the number of labels dropped for lack of a later link.
    """
    by_node: dict[int, list[int]] = {}
    for i in range(len(stream)):
        u, v = int(stream.src[i]), int(stream.dst[i])
        by_node.setdefault(u, []).append(i)
        if v != u:
            by_node.setdefault(v, []).append(i)
    times = {u: [int(stream.ts[i]) for i in ev] for u, ev in by_node.items()}
    out, dropped = [], 0
    for order, lab in enumerate(labels):
        ev = by_node.get(lab.node)
        j = bisect.bisect_left(times[lab.node], lab.ts) if ev else 0
        if not ev or j == len(ev):
            dropped += 1
            continue
        i = ev[j]
        side = "src" if int(stream.src[i]) == lab.node else "dst"
        out.append((i, order, LabelledLink(i, lab.node, side, lab.label, lab.ts)))
    out.sort(key=lambda x: (x[0], x[1]))
    return [x[2] for x in out], dropped
