"""Counter-based random numbers keyed by integer tuples.

Every draw is a pure function of its key, so results do not depend on batch
composition or call order. Used wherever a value must be reproducible per
(seed, example id, round, ...) regardless of which other examples are
processed alongside it.
"""
from __future__ import annotations

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def keyed_bits(*keys) -> np.ndarray:
    """Hash broadcastable integer keys into uint64 words."""
    arrays = np.broadcast_arrays(*[np.asarray(k, dtype=np.int64) for k in keys])
    with np.errstate(over="ignore"):
        h = np.full(arrays[0].shape, 0x243F6A8885A308D3, dtype=np.uint64)
        for a in arrays:
            h = _mix(h + _GOLDEN + a.astype(np.uint64))
    return h


def keyed_uniform(*keys) -> np.ndarray:
    """Uniform draws in [0, 1) with 53 bits of resolution."""
    bits = keyed_bits(*keys) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / 9007199254740992.0)


def keyed_normal(*keys) -> np.ndarray:
    """Standard normal draws via Box-Muller on two keyed uniforms."""
    u1 = keyed_uniform(*keys, 0)
    u2 = keyed_uniform(*keys, 1)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
