from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor

# central stencils: offsets in units of h and their weights
_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((2, -1 / 12), (1, 8 / 12), (-1, -8 / 12), (-2, 1 / 12)),
}


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6,
               order: int = 2, floor: float = 1e-8) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` rebuilds the scalar loss from the current parameter values.
    ``order`` picks the 2- or 4-point central stencil; the 4-point one
    allows a larger ``h`` so round-off does not swamp tiny gradients. The
    relative error of each coordinate is ``|a - b| / max(|a|, |b|, floor)``;
    ``floor`` sits above the stencil's round-off so that exactly-zero
    gradients are not judged against numerical noise.
    """
    if order not in _STENCILS:
        raise ValueError(f"order must be 2 or 4, got {order}")
    stencil = _STENCILS[order]
    for p in params:
        if p.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 parameters, got {p.dtype} for {p.name}")
        p.grad = None
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            fd = 0.0
            for k, w in stencil:
                flat[i] = old + k * h
                fd += w * f().item()
            flat[i] = old
            fd /= h
            a = float(analytic.reshape(-1)[i])
            if not (np.isfinite(fd) and np.isfinite(a)):
                raise FloatingPointError(f"non-finite gradient at {p.name}[{i}]")
            rel = abs(a - fd) / max(abs(a), abs(fd), floor)
            worst = max(worst, rel)
    return worst
