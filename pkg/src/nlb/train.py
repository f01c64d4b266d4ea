"""Streaming training and evaluation.

Every batch runs in two phases: predictions are served from the current
tables and statuses, then the batch's events are applied. Nothing a
prediction reads can depend on its own or later events.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .autodiff import Adam, Tape, Tensor, ops
from .model import ModelConfig, NLBModel, NodeState
from .sampler import NeighborTable, SamplerConfig, Scheme
from .stream import (LinkStream, SplitView, assign_labels_to_links, chronological_split,
                     inductive_mask)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 100
    epochs: int = 5
    lr: float = 1e-4
    negatives_per_positive: int = 1
    eval_negatives: int = 500
    seed: int = 0
    scheme: str = "edge"
    alpha: float = 0.9
    s: int = 10
    d_status: int = 64
    d_time: int = 64
    d_msg: int = 64
    d_out: int = 64
    heads: int = 2
    dropout: float = 0.1
    dtype: str = "float32"
    mask_p: float = 0.1
    node_head_epochs: int = 200

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.eval_negatives < 1:
            raise ValueError("eval_negatives must be >= 1")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(Scheme.parse(self.scheme), self.s, self.alpha, seed=self.seed)

    def model(self, edge_dim: int, n_classes: int = 2) -> ModelConfig:
        return ModelConfig(self.d_status, self.d_time, self.d_msg, self.d_out, self.heads,
                           edge_dim, n_classes, self.dropout, self.dtype, self.seed)


@dataclass
class EvalReport:
    auc: float = float("nan")
    ap: float = float("nan")
    mrr: float = float("nan")
    f1: float = float("nan")
    train_epoch_s: float = 0.0
    test_s: float = 0.0
    latency_s: float = 0.0
    n_queries: int = 0
    losses: list[float] = field(default_factory=list)

    def row(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("losses")
        return d


def sample_negatives(pos_dst: np.ndarray, pool: np.ndarray, k: int,
                     rng: np.random.Generator) -> np.ndarray:
    """``(len(pos_dst), k)`` uniform draws from ``pool``, never the true destination."""
    pos = np.asarray(pos_dst, dtype=np.int64)
    if len(pool) < 2:
        raise ValueError("need at least two nodes to draw negatives")
    out = pool[rng.integers(0, len(pool), size=(len(pos), k))]
    bad = out == pos[:, None]
    while bad.any():
        out[bad] = pool[rng.integers(0, len(pool), size=int(bad.sum()))]
        bad = out == pos[:, None]
    return out


class Runner:
    """Model, forward tables, statuses and optimizer for one stream."""

    def __init__(self, stream: LinkStream, cfg: TrainConfig, n_classes: int = 2):
        self.stream = stream
        self.cfg = cfg
        self.features = stream.features
        self.model = NLBModel(cfg.model(stream.features.dim, n_classes))
        self.table = NeighborTable(stream.n_nodes, cfg.sampler())
        self.t0 = int(stream.ts[0]) if len(stream) else 0
        self.state = NodeState(stream.n_nodes, cfg.d_status, self.t0, self.model.dtype)
        self.opt = Adam(self.model.parameters(), lr=cfg.lr)
        self.rng = np.random.default_rng(cfg.seed)
        self.all_nodes = np.arange(stream.n_nodes)

    def reset(self) -> None:
        self.table.reset()
        self.state.reset(self.t0)

    def apply(self, batch: LinkStream) -> None:
        """Update phase: statuses, then forward tables."""
        self.model.process_events(batch, self.state, self.features)
        self.table.batch_update(batch)

    def replay(self, links: LinkStream) -> None:
        for batch in links.batches(self.cfg.batch_size):
            self.apply(batch)

    def _split3(self, z: Tensor, b: int, k: int):
        zs = ops.gather_rows(z, np.arange(b))
        zd = ops.gather_rows(z, np.arange(b, 2 * b))
        zn = ops.gather_rows(z, np.arange(2 * b, 2 * b + b * k))
        return zs, zd, zn

    def train_epoch(self, links: LinkStream, pool: np.ndarray | None = None) -> list[float]:
        """One chronological pass with a BCE step per batch."""
        model, cfg = self.model, self.cfg
        pool = links.nodes() if pool is None else pool
        k = cfg.negatives_per_positive
        model.train()
        losses = []
        tape = Tape()
        for batch in links.batches(cfg.batch_size):
            b = len(batch)
            neg = sample_negatives(batch.dst, pool, k, self.rng).reshape(-1)
            nodes = np.concatenate([batch.src, batch.dst, neg])
            times = np.concatenate([batch.ts, batch.ts, np.repeat(batch.ts, k)])
            with tape:
                z = model.embed(nodes, times, self.table, self.state, self.features)
                zs, zd, zn = self._split3(z, b, k)
                zs_rep = ops.gather_rows(zs, np.repeat(np.arange(b), k))
                logits = ops.concat([model.link_logits(zs, zd), model.link_logits(zs_rep, zn)],
                                    axis=0)
                loss = ops.bce_with_logits(logits, np.r_[np.ones(b), np.zeros(b * k)])
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"non-finite loss at events {batch.event_idx[0]}..{batch.event_idx[-1]}")
            self.opt.zero_grad()
            tape.backward(loss)
            self.opt.step()
            self.state.detach()
            tape = Tape()
            with tape:
                model.process_events(batch, self.state, self.features)
            self.table.batch_update(batch)
            losses.append(value)
        self.state.detach()
        model.eval()
        return losses

    def evaluate_links(self, links: LinkStream, pool: np.ndarray | None = None,
                       n_neg: int | None = None) -> EvalReport:
        """Score each batch, then apply it; tables keep moving forward."""
        model = self.model.eval()
        pool = self.all_nodes if pool is None else pool
        n_neg = n_neg or self.cfg.eval_negatives
        pos_all, neg_all, rr = [], [], []
        latency = 0.0
        t_start = time.perf_counter()
        for batch in links.batches(self.cfg.batch_size):
            b = len(batch)
            q0 = time.perf_counter()
            neg1 = sample_negatives(batch.dst, pool, 1, self.rng).reshape(-1)
            negk = sample_negatives(batch.dst, pool, n_neg, self.rng).reshape(-1)
            nodes = np.concatenate([batch.src, batch.dst, neg1, negk])
            times = np.concatenate([batch.ts, batch.ts, batch.ts, np.repeat(batch.ts, n_neg)])
            z = model.embed(nodes, times, self.table, self.state, self.features).data
            zs, zd, zn1, znk = z[:b], z[b:2 * b], z[2 * b:3 * b], z[3 * b:]
            pos = model.link_logits(Tensor(zs), Tensor(zd)).data.reshape(-1)
            neg = model.link_logits(Tensor(zs), Tensor(zn1)).data.reshape(-1)
            negk_s = model.link_logits(Tensor(np.repeat(zs, n_neg, axis=0)),
                                       Tensor(znk)).data.reshape(b, n_neg)
            latency += time.perf_counter() - q0
            pos_all.append(pos)
            neg_all.append(neg)
            rr.append(metrics.reciprocal_ranks(pos, negk_s))
            self.apply(batch)
        n_batches = max(1, -(-len(links) // self.cfg.batch_size))
        if not pos_all:
            return EvalReport()
        pos_all = np.concatenate(pos_all)
        neg_all = np.concatenate(neg_all)
        scores = np.r_[pos_all, neg_all]
        labels = np.r_[np.ones(len(pos_all)), np.zeros(len(neg_all))]
        rr = np.concatenate(rr)
        return EvalReport(auc=metrics.roc_auc(scores, labels),
                          ap=metrics.average_precision(scores, labels),
                          mrr=float(np.mean(rr)),
                          test_s=time.perf_counter() - t_start,
                          latency_s=latency / n_batches, n_queries=len(pos_all))

    def fit(self, train_links: LinkStream, epochs: int | None = None) -> tuple[list[float], float]:
        """Train from scratch each epoch; leaves state at the end of ``train_links``."""
        epochs = self.cfg.epochs if epochs is None else epochs
        losses, times = [], []
        pool = train_links.nodes()
        for ep in range(epochs):
            self.reset()
            t0 = time.perf_counter()
            ep_losses = self.train_epoch(train_links, pool)
            times.append(time.perf_counter() - t0)
            losses.append(float(np.mean(ep_losses)) if ep_losses else float("nan"))
            log.info("epoch %d loss %.4f (%.1fs)", ep, losses[-1], times[-1])
        if epochs == 0:
            self.reset()
            self.replay(train_links)
        return losses, float(np.mean(times)) if times else 0.0

    def checkpoint(self):
        return self.table.copy(), self.state.copy()

    def restore(self, ckpt) -> None:
        table, state = ckpt
        self.table = table.copy()
        self.state = state.copy()

    def save(self, path, extra: dict | None = None) -> None:
        self.model.save(path, {"train": dataclasses.asdict(self.cfg), **(extra or {})})


def run_transductive(stream: LinkStream, cfg: TrainConfig,
                     split: SplitView | None = None) -> tuple[EvalReport, Runner]:
    """Train on the train range, stream through validation, report on test."""
    split = split or chronological_split(stream)
    runner = Runner(stream, cfg)
    train = stream.take(np.arange(split.train.start, split.train.stop))
    losses, epoch_s = runner.fit(train)
    runner.boundary = runner.checkpoint()
    runner.val_report = runner.evaluate_links(stream.take(np.arange(split.val.start, split.val.stop)))
    report = runner.evaluate_links(stream.take(np.arange(split.test.start, split.test.stop)))
    report.losses = losses
    report.train_epoch_s = epoch_s
    return report, runner


def evaluate_inductive(stream: LinkStream, runner: Runner, split: SplitView) -> EvalReport:
    """Reset, replay all train+val events without learning, then test."""
    runner.reset()
    runner.replay(stream.take(np.arange(split.train.start, split.val.stop)))
    return runner.evaluate_links(stream.take(np.arange(split.test.start, split.test.stop)))


def run_inductive(stream: LinkStream, cfg: TrainConfig,
                  split: SplitView | None = None) -> tuple[EvalReport, Runner, SplitView]:
    split = split or chronological_split(stream)
    split = inductive_mask(split, stream, cfg.mask_p, cfg.seed)
    runner = Runner(stream, cfg)
    view = stream.take(split.train_indices(stream))
    losses, epoch_s = runner.fit(view)
    report = evaluate_inductive(stream, runner, split)
    report.losses = losses
    report.train_epoch_s = epoch_s
    return report, runner, split


def train_node_head(model: NLBModel, emb: np.ndarray, labels: np.ndarray,
                    epochs: int = 200, lr: float = 1e-2, seed: int = 0) -> None:
    """Fit the node head alone on fixed embeddings (full-batch Adam)."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise ValueError("node classification needs at least two classes in training labels")
    params = model.parameters("node.")
    opt = Adam(params, lr=lr)
    x = Tensor(np.asarray(emb, dtype=model.dtype))
    for _ in range(epochs):
        with Tape() as tape:
            loss = ops.softmax_cross_entropy(model.node_logits(x), labels)
        opt.zero_grad()
        tape.backward(loss)
        opt.step()


def node_scores(model: NLBModel, emb: np.ndarray) -> np.ndarray:
    logits = model.predict_node(np.asarray(emb, dtype=model.dtype))
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def collect_label_embeddings(runner: Runner, stream: LinkStream, labels):
    """Replay the stream; embed each labelled node just before its link is applied."""
    assigned, dropped = assign_labels_to_links(stream, labels)
    by_event: dict[int, list] = {}
    for lab in assigned:
        by_event.setdefault(lab.event_idx, []).append(lab)
    runner.reset()
    model = runner.model.eval()
    emb, ys, evs = [], [], []
    for a in range(0, len(stream), runner.cfg.batch_size):
        idx = np.arange(a, min(a + runner.cfg.batch_size, len(stream)))
        hits = [lab for i in idx for lab in by_event.get(int(i), ())]
        if hits:
            nodes = np.array([h.node for h in hits])
            times = stream.ts[[h.event_idx for h in hits]]
            emb.append(model.embed(nodes, times, runner.table, runner.state, runner.features).data)
            ys.extend(h.label for h in hits)
            evs.extend(h.event_idx for h in hits)
        runner.apply(stream.take(idx))
    d = runner.cfg.d_out
    emb = np.concatenate(emb) if emb else np.zeros((0, d))
    return emb, np.asarray(ys, dtype=np.int64), np.asarray(evs, dtype=np.int64), dropped


def evaluate_nodes(stream: LinkStream, runner: Runner, labels, split: SplitView | None = None,
                   n_classes: int | None = None) -> EvalReport:
    """Node classification from frozen representations.

    Reports AUC for two classes and micro-F1 otherwise.
    """
    split = split or chronological_split(stream)
    t0 = time.perf_counter()
    emb, y, ev, _ = collect_label_embeddings(runner, stream, labels)
    n_classes = n_classes or runner.model.cfg.n_classes
    train = ev < split.train.stop
    test = ev >= split.test.start
    if train.sum() < 2 or len(np.unique(y[train])) < 2:
        raise ValueError("node classification needs at least two classes in training labels")
    train_node_head(runner.model, emb[train], y[train], runner.cfg.node_head_epochs,
                    seed=runner.cfg.seed)
    report = EvalReport(n_queries=int(test.sum()))
    if test.any():
        prob = node_scores(runner.model, emb[test])
        if n_classes == 2:
            report.auc = metrics.roc_auc(prob[:, 1], y[test] == 1)
        else:
            report.f1 = metrics.f1_micro(y[test], prob.argmax(axis=1))
    report.test_s = time.perf_counter() - t0
    return report


def sweep(stream: LinkStream, axis: str, values, base: TrainConfig,
          split: SplitView | None = None) -> list[tuple[float, EvalReport]]:
    """Full train + transductive evaluation per value of ``alpha`` or ``s``."""
    if axis not in ("alpha", "s"):
        raise ValueError(f"sweep axis must be 'alpha' or 's', got {axis!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for v in values:
        cast = int(v) if axis == "s" else float(v)
        cfg = dataclasses.replace(base, **{axis: cast})
        report, _ = run_transductive(stream, cfg, split)
        rows.append((cast, report))
    return rows


def report_header(cfg: TrainConfig, stream: LinkStream, extra: dict | None = None) -> str:
    meta = {"seed": cfg.seed, "dataset_hash": stream.content_hash(),
            "config": dataclasses.asdict(cfg), **(extra or {})}
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def reports_to_csv(rows, key: str, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    cols = list(EvalReport().row().keys())
    w.writerow([key, *cols])
    for value, rep in rows:
        r = rep.row()
        w.writerow([value, *[f"{r[c]:.6f}" if isinstance(r[c], float) else r[c] for c in cols]])
    return buf.getvalue()


def stream_loss(model: NLBModel, stream: LinkStream, negatives: np.ndarray, s: int = 3,
                alpha: float = 0.9, batch_size: int = 5, seed: int = 0) -> Tensor:
    """Mean link loss over a whole stream with gradients through every status update.

    Must be called under an active tape. ``negatives`` holds one corrupted
    destination per event. Tables are rebuilt from scratch so the value is
    a pure function of the parameters.
    """
    table = NeighborTable(stream.n_nodes, SamplerConfig(Scheme.EDGE, s, alpha, seed=seed))
    state = NodeState(stream.n_nodes, model.cfg.d_status, int(stream.ts[0]), model.dtype)
    total = None
    for a in range(0, len(stream), batch_size):
        idx = np.arange(a, min(a + batch_size, len(stream)))
        batch = stream.take(idx)
        b = len(batch)
        nodes = np.concatenate([batch.src, batch.dst, negatives[idx]])
        times = np.tile(batch.ts, 3)
        z = model.embed(nodes, times, table, state, stream.features)
        zs = ops.gather_rows(z, np.arange(b))
        zd = ops.gather_rows(z, np.arange(b, 2 * b))
        zn = ops.gather_rows(z, np.arange(2 * b, 3 * b))
        logits = ops.concat([model.link_logits(zs, zd), model.link_logits(zs, zn)], axis=0)
        loss = ops.scale(ops.bce_with_logits(logits, np.r_[np.ones(b), np.zeros(b)]),
                         b / len(stream))
        total = loss if total is None else ops.add(total, loss)
        model.process_events(batch, state, stream.features)
        table.batch_update(batch)
    return total
