"""Deterministic counter-based random streams.

A Stream is a pure function of (seed, substream path, counter), so the same
draws come out on every run and every platform. Gaussians use the Box-Muller
transform; there is no rejection loop that could desynchronize the counter.
Substreams are addressed by name, which lets independent consumers (model
init, batch shuffling, attack training) share one master seed without their
draw counts interfering.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_SEED_SALT = 0xA0761D6478BD642F
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_INV_2_53 = 2.0 ** -53


def _mix(z: int) -> int:
    """splitmix64 finalizer on a plain python int."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _fnv1a(name: str) -> int:
    h = _FNV_OFFSET
    for byte in name.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def derive_seed(seed: int, label: str) -> int:
    """Deterministically derive a new master seed from a seed and a label."""
    return _mix((int(seed) & _MASK) ^ _fnv1a(label))


class Stream:
    """Named, splittable source of reproducible uniforms and gaussians."""

    __slots__ = ("_key", "_counter")

    def __init__(self, seed: int, _key: int | None = None):
        if _key is None:
            _key = _mix((int(seed) & _MASK) ^ _SEED_SALT)
        self._key = _key
        self._counter = 0

    def substream(self, name: str) -> "Stream":
        """Independent stream addressed by name; same name, same stream."""
        return Stream(0, _key=_mix(self._key ^ _fnv1a(name)))

    def raw(self, n: int) -> np.ndarray:
        """Next n raw 64-bit words as uint64."""
        if n < 0:
            raise ValueError("draw count must be non-negative")
        # uint64 array arithmetic wraps mod 2**64, which is exactly what the
        # mixing function needs; scalars would warn, arrays do not.
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = idx * np.uint64(_GOLDEN) + np.uint64(self._key)
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
        return z

    def uniform01(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1), each built from the top 53 bits."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        size = int(np.prod(shape))
        u = self.uniform01(size)
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard gaussians via Box-Muller on counter-indexed uniforms."""
        size = int(np.prod(shape))
        pairs = (size + 1) // 2
        # u1 lies in (0, 1] so the log is always finite.
        u1 = ((self.raw(pairs) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (self.raw(pairs) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = (2.0 * np.pi) * u2
        out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return out[:size].reshape(shape)

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n int64 values uniform on {0, ..., bound-1}."""
        if bound < 1:
            raise ValueError("bound must be positive")
        vals = np.floor(self.uniform01(n) * bound).astype(np.int64)
        return np.minimum(vals, bound - 1)

    def permutation(self, n: int) -> np.ndarray:
        """A permutation of range(n) obtained by sorting random keys."""
        return np.argsort(self.raw(n), kind="stable")
