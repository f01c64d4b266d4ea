"""Tensor container and the tape that records operations for backward."""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

_active: list["Tape"] = []


class ShapeError(ValueError):
    pass


class Tensor:
    """Dense array with an optional gradient buffer.

    ``requires_grad`` leaves accumulate into ``grad`` on backward; results
    of recorded ops carry gradients only inside the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_leaf")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def current_tape() -> "Tape | None":
    return _active[-1] if _active else None


class Tape:
    """Ordered record of executed ops.

    Use as a context manager; ops executed while a tape is active and
    touching a ``requires_grad`` input are recorded on it. The same tape may
    be re-entered to extend the record.
    """

    def __init__(self):
        self.entries: list[tuple[Tensor, tuple[Tensor, ...], object]] = []

    def __enter__(self) -> "Tape":
        _active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.pop()

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        out._leaf = False
        self.entries.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for out, inputs, fn in reversed(self.entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for x, gx in zip(inputs, fn(g)):
                if gx is None or not x.requires_grad:
                    continue
                k = id(x)
                if k in grads:
                    grads[k] = grads[k] + gx
                else:
                    grads[k] = gx
                if x._leaf:
                    leaves[k] = x
        for k, x in leaves.items():
            g = grads.pop(k).astype(x.data.dtype, copy=False)
            x.grad = g if x.grad is None else x.grad + g
