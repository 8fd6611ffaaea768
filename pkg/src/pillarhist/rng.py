"""Counter-based pseudo-random numbers.

Every generated value is a pure function of ``(seed, stream, counter)``::

    key   = mix64(seed XOR mix64(stream))
    bits  = mix64(key + counter * 0x9E3779B97F4A7C15)      (mod 2**64)
    u     = (bits >> 11) * 2**-53                           in [0, 1)

where ``mix64`` is the SplitMix64 finalizer. There is no hidden state, so a
value can be recomputed in isolation (e.g. one weight at ``(row, col)``) and
results do not depend on generation order or thread count.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# named streams keep unrelated consumers of one seed independent
STREAM_WEIGHTS = 1
STREAM_SCENE = 2


def mix64(x):
    """SplitMix64 finalizer on a uint64 scalar or array (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def _key(seed: int, stream: int) -> np.uint64:
    s = np.uint64(int(seed) & _MASK64)
    return mix64(s ^ mix64(np.uint64(int(stream) & _MASK64)))


def uniform01(seed: int, stream: int, counters) -> np.ndarray:
    """Uniform doubles in [0, 1), one per counter."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = mix64(_key(seed, stream) + c * _GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def uniform(seed: int, stream: int, counters, low: float, high: float) -> np.ndarray:
    return low + (high - low) * uniform01(seed, stream, counters)
