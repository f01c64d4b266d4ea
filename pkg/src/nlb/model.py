"""Encoder: time encoding, per-node GRU status, attention over table slots.

A node's representation combines its own status with an attention-weighted
sum of messages built from the statuses of the neighbors currently held in
its forward table. Statuses are advanced by a GRU after each event.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Tensor, current_tape, load_params, ops, save_params
from .sampler import NeighborSlot, NeighborTable
from .stream import EdgeFeatureStore, LinkStream


@dataclass
class ModelConfig:
    d_status: int = 64
    d_time: int = 64
    d_msg: int = 64
    d_out: int = 64
    heads: int = 2
    edge_dim: int = 0
    n_classes: int = 2
    dropout: float = 0.1
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if self.d_time % 2:
            raise ValueError("d_time must be even (cos/sin pairs)")


def _glorot(rng, fan_in, fan_out, dtype):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)


class NodeState:
    """Per-node status rows and last-event times.

    While a tape is recording, rows written by ``commit`` stay attached to
    the graph so a later loss can reach the GRU weights; ``detach`` cuts
    that history.
    """

    def __init__(self, n_nodes: int, dim: int, t0: int = 0, dtype=np.float32):
        self.r = np.zeros((n_nodes, dim), dtype=dtype)
        self.last_t = np.full(n_nodes, t0, dtype=np.int64)
        self.live: Tensor | None = None
        self.live_idx = np.empty(0, dtype=np.int64)
        self.live_pos = np.full(n_nodes, -1, dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return self.r.shape[0]

    def reset(self, t0: int = 0) -> None:
        self.r[:] = 0
        self.last_t[:] = t0
        self.detach()

    def copy(self) -> "NodeState":
        other = NodeState(self.n_nodes, self.r.shape[1], 0, self.r.dtype)
        other.r[:] = self.r
        other.last_t[:] = self.last_t
        return other

    def detach(self) -> None:
        self.live = None
        self.live_pos[self.live_idx] = -1
        self.live_idx = np.empty(0, dtype=np.int64)

    def rows(self, idx) -> Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        if self.live is None or current_tape() is None:
            return Tensor(self.r[idx])
        pos = self.live_pos[idx]
        hit = pos >= 0
        if not hit.any():
            return Tensor(self.r[idx])
        miss = idx[~hit]
        mapped = np.empty(len(idx), dtype=np.int64)
        mapped[hit] = pos[hit]
        mapped[~hit] = len(self.live_idx) + np.arange(len(miss))
        pool = ops.concat([self.live, Tensor(self.r[miss])], axis=0) if len(miss) else self.live
        return ops.gather_rows(pool, mapped)

    def commit(self, idx, new: Tensor) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        if not new.requires_grad or current_tape() is None:
            self.detach()
            self.r[idx] = new.data
            return
        union = np.union1d(self.live_idx, idx)
        base = self.rows(union)
        live = ops.scatter_rows(base, np.searchsorted(union, idx), new)
        self.r[idx] = new.data
        self.live_pos[self.live_idx] = -1
        self.live, self.live_idx = live, union
        self.live_pos[union] = np.arange(len(union))


class NLBModel:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.training = False
        self._drop_rng = np.random.default_rng(cfg.seed + 1)
        self.last_attention: np.ndarray | None = None
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(cfg.seed)
        d, k, dt, dm, do, H = (cfg.d_status, cfg.edge_dim, cfg.d_time, cfg.d_msg,
                               cfg.d_out, cfg.heads)
        nf = dt // 2
        self._add("omega", (10.0 ** np.linspace(-5, 0, nf)).reshape(1, nf))
        gin = 2 * d + dt + k
        for g in ("r", "z", "n"):
            self._add(f"gru.Wx{g}", _glorot(rng, gin, d, self.dtype))
            self._add(f"gru.Wh{g}", _glorot(rng, d, d, self.dtype))
            self._add(f"gru.bx{g}", np.zeros(d))
            self._add(f"gru.bh{g}", np.zeros(d))
        self._mlp("msg", [d + k + dt, dm, dm], rng)
        self._add("att.w", _glorot(rng, dm, H, self.dtype))
        self._mlp("out", [d + H * dm, do, do], rng)
        self._mlp("link", [2 * do, do, 1], rng)
        self._mlp("node", [do, do, cfg.n_classes], rng)

    def _add(self, name, value):
        self.params[name] = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True,
                                   name=name)

    def _mlp(self, prefix, sizes, rng):
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self._add(f"{prefix}.W{i}", _glorot(rng, a, b, self.dtype))
            self._add(f"{prefix}.b{i}", np.zeros(b))

    def p(self, name) -> Tensor:
        return self.params[name]

    def parameters(self, prefix: str | None = None) -> list[Tensor]:
        return [v for k, v in self.params.items() if prefix is None or k.startswith(prefix)]

    def train(self, flag: bool = True) -> "NLBModel":
        self.training = flag
        return self

    def eval(self) -> "NLBModel":
        return self.train(False)

    def _apply_mlp(self, prefix, x, drop: bool = True) -> Tensor:
        n = sum(1 for k in self.params if k.startswith(prefix + ".W"))
        for i in range(n):
            x = ops.add(ops.matmul(x, self.p(f"{prefix}.W{i}")), self.p(f"{prefix}.b{i}"))
            if i < n - 1:
                x = ops.relu(x)
                if drop:
                    x = ops.dropout(x, self.cfg.dropout, self.training, self._drop_rng)
        return x

    def _const(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.dtype))

    def t_encode(self, delta) -> Tensor:
        """Interleaved ``[cos(w_1 dt), sin(w_1 dt), ...]`` rows, one per input."""
        dt = self._const(np.asarray(delta, dtype=np.float64).reshape(-1, 1))
        phase = ops.matmul(dt, self.p("omega"))
        return ops.interleave(ops.cos(phase), ops.sin(phase))

    def _edge(self, features: EdgeFeatureStore | None, fidx) -> list[Tensor]:
        if self.cfg.edge_dim == 0:
            return []
        return [self._const(features.take(fidx))]

    def embed(self, nodes, times, table: NeighborTable, state: NodeState,
              features: EdgeFeatureStore | None = None) -> Tensor:
        """Representations for ``(node, query time)`` pairs, shape ``(B, d_out)``.

        Reads the table and statuses as they are now; callers must embed a
        batch before applying that batch's updates.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        if table.s > 0:
            occ, nb, nts, nf = table.block(nodes)
            qi, si = np.nonzero(occ)
        else:
            qi = si = np.empty(0, dtype=np.int64)
            nb = nts = nf = None
        agg = self._aggregate(len(nodes), qi, nb[qi, si] if len(qi) else qi,
                              times[qi] - nts[qi, si] if len(qi) else qi,
                              nf[qi, si] if len(qi) else qi, state, features)
        z = self._apply_mlp("out", ops.concat([state.rows(nodes), agg]))
        if not np.all(np.isfinite(z.data)):
            raise FloatingPointError("non-finite embedding")
        return z

    def _aggregate(self, n_query, seg, nbrs, delta, fidx, state, features) -> Tensor:
        width = self.cfg.heads * self.cfg.d_msg
        if len(seg) == 0:
            self.last_attention = np.zeros((0, self.cfg.heads))
            return self._const(np.zeros((n_query, width)))
        parts = [state.rows(nbrs), *self._edge(features, fidx), self.t_encode(delta)]
        msg = self._apply_mlp("msg", ops.concat(parts))
        att = ops.segment_softmax(ops.matmul(msg, self.p("att.w")), seg, n_query)
        self.last_attention = att.data
        return ops.segment_attend(att, msg, seg, n_query)

    def embed_one(self, u: int, t: int, snapshot: list[NeighborSlot], state: NodeState,
                  features: EdgeFeatureStore | None = None) -> np.ndarray:
        """Embedding of one node from an explicit snapshot, reduced in slot order."""
        snap = sorted(snapshot, key=lambda e: e.slot)
        seg = np.zeros(len(snap), dtype=np.int64)
        nbrs = np.array([e.nbr for e in snap], dtype=np.int64)
        delta = np.array([t - e.ts for e in snap], dtype=np.int64)
        fidx = np.array([-1 if e.edge_feat is None else e.edge_feat for e in snap], dtype=np.int64)
        agg = self._aggregate(1, seg, nbrs, delta, fidx, state, features)
        z = self._apply_mlp("out", ops.concat([state.rows([u]), agg]))
        return z.data[0]

    def link_logits(self, zu: Tensor, zv: Tensor) -> Tensor:
        return self._apply_mlp("link", ops.concat([zu, zv]), drop=False)

    def predict_link(self, zu, zv) -> np.ndarray:
        zu = zu if isinstance(zu, Tensor) else self._const(np.atleast_2d(zu))
        zv = zv if isinstance(zv, Tensor) else self._const(np.atleast_2d(zv))
        return ops.sigmoid(self.link_logits(zu, zv)).data.reshape(-1)

    def node_logits(self, z: Tensor) -> Tensor:
        return self._apply_mlp("node", z, drop=False)

    def predict_node(self, z) -> np.ndarray:
        z = z if isinstance(z, Tensor) else self._const(np.atleast_2d(z))
        return self.node_logits(z).data

    def gru(self, x: Tensor, h: Tensor) -> Tensor:
        p = self.p

        def gate(g):
            return ops.add(ops.add(ops.matmul(x, p(f"gru.Wx{g}")), p(f"gru.bx{g}")),
                           ops.add(ops.matmul(h, p(f"gru.Wh{g}")), p(f"gru.bh{g}")))

        r = ops.sigmoid(gate("r"))
        z = ops.sigmoid(gate("z"))
        hn = ops.add(ops.matmul(h, p("gru.Whn")), p("gru.bhn"))
        n = ops.tanh(ops.add(ops.add(ops.matmul(x, p("gru.Wxn")), p("gru.bxn")), ops.mul(r, hn)))
        return ops.add(n, ops.mul(z, ops.sub(h, n)))

    def process_events(self, links: LinkStream, state: NodeState,
                       features: EdgeFeatureStore | None = None) -> None:
        """Advance both endpoints' statuses for each link, in event order.

        Each update reads the pre-event statuses of its two endpoints.
        Events are grouped into waves of node-disjoint events so each wave
        runs as one vectorized GRU step with the same result as a
        one-by-one replay.
        """
        n = len(links)
        if n == 0:
            return
        wave = np.empty(n, dtype=np.int64)
        last: dict[int, int] = {}
        for i in range(n):
            u, v = int(links.src[i]), int(links.dst[i])
            w = max(last.get(u, -1), last.get(v, -1)) + 1
            wave[i] = last[u] = last[v] = w
        for w in range(int(wave.max()) + 1):
            ev = np.flatnonzero(wave == w)
            u, v = links.src[ev], links.dst[ev]
            t, f = links.ts[ev], links.feat_idx[ev]
            two = u != v
            own = np.concatenate([u, v[two]])
            partner = np.concatenate([v, u[two]])
            tt = np.concatenate([t, t[two]])
            ff = np.concatenate([f, f[two]])
            h = state.rows(own)
            x = ops.concat([h, state.rows(partner),
                            self.t_encode(tt - state.last_t[own]), *self._edge(features, ff)])
            state.commit(own, self.gru(x, h))
            state.last_t[own] = tt

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"model": asdict(self.cfg), **(extra or {})}
        save_params(path, self.params, meta)

    @classmethod
    def load(cls, path) -> tuple["NLBModel", dict]:
        arrays, meta = load_params(path)
        model = cls(ModelConfig(**meta["model"]))
        for name, arr in arrays.items():
            model.params[name].data = arr.astype(model.dtype)
        return model, meta
