"""Differentiable ops over 2-D tensors.

Broadcasting is limited to adding a 1-D bias to every row; everything else
must match exactly.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, current_tape


def _t(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = current_tape()
    needs = tape is not None and any(x.requires_grad for x in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward)
    return out


def _same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b, a)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    A, B = a.data, b.data
    return _result(A @ B, (a, b), lambda g: (g @ B.T, A.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1-D bias added to every row of ``a``."""
    a, b = _t(a), _t(b, a)
    if a.shape == b.shape:
        return _result(a.data + b.data, (a, b), lambda g: (g, g))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _result(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add: shapes {a.shape} and {b.shape} are incompatible")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b, a)
    _same(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _t(a), _t(b, a)
    _same(a, b, "mul")
    A, B = a.data, b.data
    return _result(A * B, (a, b), lambda g: (g * B, g * A))


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def concat(xs, axis: int = 1) -> Tensor:
    xs = [_t(x) for x in xs]
    other = 1 - axis
    if any(x.data.ndim != 2 for x in xs) or len({x.shape[other] for x in xs}) > 1:
        raise ShapeError(f"concat(axis={axis}): shapes {[x.shape for x in xs]}")
    cuts = np.cumsum([x.shape[axis] for x in xs])[:-1]
    data = np.concatenate([x.data for x in xs], axis=axis)
    return _result(data, tuple(xs), lambda g: tuple(np.split(g, cuts, axis=axis)))


def interleave(a: Tensor, b: Tensor) -> Tensor:
    """Columns ``a0, b0, a1, b1, ...``."""
    _same(a, b, "interleave")
    n, d = a.shape
    out = np.empty((n, 2 * d), dtype=np.result_type(a.data, b.data))
    out[:, 0::2] = a.data
    out[:, 1::2] = b.data
    return _result(out, (a, b), lambda g: (g[:, 0::2], g[:, 1::2]))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _result(y, (x,), lambda g: (g * y * (1 - y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1 / (1 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1 + e)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1 - y * y),))


def cos(x: Tensor) -> Tensor:
    X = x.data
    return _result(np.cos(X), (x,), lambda g: (-g * np.sin(X),))


def sin(x: Tensor) -> Tensor:
    X = x.data
    return _result(np.sin(X), (x,), lambda g: (g * np.cos(X),))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax."""
    y = _softmax_rows(x.data)
    return _result(y, (x,), lambda g: (y * (g - (g * y).sum(axis=1, keepdims=True)),))


def segment_softmax(x: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Softmax over rows sharing a segment id, independently per column.

    ``seg`` must be sorted; segments with no rows simply produce nothing.
    """
    z = x.data
    if len(seg) != z.shape[0]:
        raise ShapeError(f"segment_softmax: {len(seg)} ids for shape {z.shape}")
    mx = np.full((n_seg, z.shape[1]), -np.inf, dtype=z.dtype)
    np.maximum.at(mx, seg, z)
    e = np.exp(z - mx[seg])
    den = np.zeros((n_seg, z.shape[1]), dtype=z.dtype)
    np.add.at(den, seg, e)
    y = e / den[seg]

    def back(g):
        dot = np.zeros((n_seg, z.shape[1]), dtype=z.dtype)
        np.add.at(dot, seg, g * y)
        return (y * (g - dot[seg]),)

    return _result(y, (x,), back)


def segment_attend(weights: Tensor, values: Tensor, seg: np.ndarray, n_seg: int) -> Tensor:
    """Per-segment weighted sums, one block of columns per weight column.

    ``weights`` is ``(M, H)``, ``values`` is ``(M, D)``; the result is
    ``(n_seg, H*D)`` with block ``h`` equal to ``sum_i w[i,h] * values[i]``
    over the segment. Empty segments are zero.
    """
    W, V = weights.data, values.data
    if W.shape[0] != V.shape[0] or len(seg) != W.shape[0]:
        raise ShapeError(f"segment_attend: weights {W.shape}, values {V.shape}, {len(seg)} ids")
    m, h = W.shape
    d = V.shape[1]
    contrib = (W[:, :, None] * V[:, None, :]).reshape(m, h * d)
    out = np.zeros((n_seg, h * d), dtype=np.result_type(W, V))
    np.add.at(out, seg, contrib)

    def back(g):
        gr = g[seg].reshape(m, h, d)
        gw = np.einsum("mhd,md->mh", gr, V)
        gv = np.einsum("mhd,mh->md", gr, W)
        return gw, gv

    return _result(out, (weights, values), back)


def gather_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"gather_rows: index out of range for shape {x.shape}")
    return _result(x.data[idx], (x,), back)


def scatter_rows(base: Tensor, idx, rows: Tensor) -> Tensor:
    """Copy of ``base`` with rows ``idx`` (distinct) replaced by ``rows``."""
    idx = np.asarray(idx, dtype=np.int64)
    if rows.shape != (len(idx),) + base.shape[1:]:
        raise ShapeError(f"scatter_rows: rows {rows.shape} for {len(idx)} ids into {base.shape}")
    out = base.data.copy()
    out[idx] = rows.data

    def back(g):
        gb = g.copy()
        gb[idx] = 0
        return gb, g[idx]

    return _result(out, (base, rows), back)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-p)`` at train time."""
    if not train or p == 0:
        return x
    if not 0 <= p < 1:
        raise ValueError(f"dropout p must be in [0, 1), got {p}")
    rng = rng or np.random.default_rng()
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1 - p)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return _result(np.asarray(x.data.sum()).reshape(1, 1), (x,),
                   lambda g: (np.full(shape, g.reshape(-1)[0], dtype=x.dtype),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    shape = x.shape
    return _result(np.asarray(x.data.mean()).reshape(1, 1), (x,),
                   lambda g: (np.full(shape, g.reshape(-1)[0] / n, dtype=x.dtype),))


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 targets."""
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype).reshape(z.shape)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    p = _sigmoid(z)
    return _result(np.asarray(loss.mean()).reshape(1, 1), (logits,),
                   lambda g: (g.reshape(-1)[0] * (p - y) / n,))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of row-softmax against integer class labels."""
    z = logits.data
    lab = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or len(lab) != z.shape[0]:
        raise ShapeError(f"softmax_cross_entropy: logits {z.shape}, {len(lab)} labels")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = z.shape[0]
    loss = -logp[np.arange(n), lab].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(n), lab] -= 1
        return (g.reshape(-1)[0] * p / n,)

    return _result(np.asarray(loss).reshape(1, 1), (logits,), back)
