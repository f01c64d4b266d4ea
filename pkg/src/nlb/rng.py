"""Counter-based random numbers.

Every draw is a pure function of ``(seed, counter)``, so work can be split
across workers or batches in any order without changing the outcome. The
mixer is the SplitMix64 finalizer; the compiled kernels in ``_core.pyx``
and the fallback in ``_pycore.py`` use the exact same arithmetic.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int = 0) -> int:
    """Derive the key of an independent stream from a user seed."""
    return mix64((mix64(seed & MASK64) + (stream & MASK64) * GOLDEN) & MASK64)


def draw64(key: int, counter: int) -> int:
    return mix64((key + mix64((counter & MASK64) ^ GOLDEN)) & MASK64)


def to_unit(x: int) -> float:
    """Map 64 random bits to a double in [0, 1)."""
    return (x >> 11) * _INV53


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= np.uint64(_M1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_M2)
        z ^= z >> np.uint64(31)
    return z


class CounterRNG:
    """Stateless uniform generator addressed by integer counters.

    >>> rng = CounterRNG(7)
    >>> rng.uniform(12) == rng.uniform(12)
    True
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.key = stream_key(self.seed, self.stream)

    def uniform(self, counter: int) -> float:
        return to_unit(draw64(self.key, counter))

    def uniforms(self, counters) -> np.ndarray:
        """Vectorized ``uniform`` over an integer array of counters."""
        c = np.asarray(counters).astype(np.int64).view(np.uint64)
        with np.errstate(over="ignore"):
            inner = _mix64_np(c ^ np.uint64(GOLDEN))
            z = _mix64_np(inner + np.uint64(self.key))
        return (z >> np.uint64(11)).astype(np.float64) * _INV53

    def event_uniform(self, event_idx: int, endpoint: int) -> float:
        """Draw reserved for one endpoint (0 = src, 1 = dst) of one event."""
        return self.uniform(2 * int(event_idx) + int(endpoint))

    def event_uniforms(self, event_idx, endpoint) -> np.ndarray:
        e = np.asarray(event_idx, dtype=np.int64)
        return self.uniforms(2 * e + np.asarray(endpoint, dtype=np.int64))

    def __repr__(self) -> str:
        return f"CounterRNG(seed={self.seed}, stream={self.stream})"
