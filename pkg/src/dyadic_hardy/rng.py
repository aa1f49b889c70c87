"""Counter-based Gaussian streams keyed by ``(seed, path, step)``.

Each ``(seed, path)`` pair selects a SplitMix64 stream; the draw for step
``k`` is the stream's ``k``-th output, computed directly from the counter, so
any subset of paths or steps can be evaluated in any order with identical
results.  The 64-bit output is split into two 32-bit uniforms on
``(0, 1)`` and mapped to one standard normal by the Box-Muller cosine branch.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S32 = (np.uint64(s) for s in (30, 27, 31, 32))
_LOW32 = np.uint64(0xFFFFFFFF)
_TWO_M32 = 2.0**-32


def mix64(z):
    """SplitMix64 finalizer; wraps modulo 2**64."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def splitmix64(state: int, n: int) -> np.ndarray:
    """First ``n`` outputs of SplitMix64 started from ``state``."""
    counters = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(np.uint64(state) + counters * GOLDEN)


def stream_keys(seed: int, paths) -> np.ndarray:
    """Per-path stream state derived from ``(seed, path)``."""
    paths = np.asarray(paths, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + GOLDEN)
        return mix64(base ^ mix64(paths * GOLDEN + np.uint64(1)))


def uniform_pairs(keys, step: int):
    """Two independent uniforms on ``(0, 1)`` per key at counter ``step``."""
    with np.errstate(over="ignore"):
        z = mix64(keys + np.uint64(step + 1) * GOLDEN)
    hi = (z >> _S32).astype(np.float64)
    lo = (z & _LOW32).astype(np.float64)
    return (hi + 0.5) * _TWO_M32, (lo + 0.5) * _TWO_M32


def normals(keys, step: int) -> np.ndarray:
    """One standard normal per key for counter ``step``."""
    u1, u2 = uniform_pairs(keys, step)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
