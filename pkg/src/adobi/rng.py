"""Keyed random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, *keys)``. A stream therefore depends only on what it is
for, not on how many draws happened before it, which keeps ensemble runs and
sweeps reproducible regardless of execution order.
"""

from __future__ import annotations

import zlib

import numpy as np

_PURPOSES: dict[str, int] = {}


def _key(k) -> int:
    if isinstance(k, str):
        if k not in _PURPOSES:
            _PURPOSES[k] = zlib.crc32(k.encode())
        return _PURPOSES[k]
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


def stream(seed: int, *keys) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and any mix of ints and purpose strings."""
    ss = np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng, *keys) -> np.random.Generator:
    """Accept an int seed or an existing Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        rng = 0
    return stream(rng, *keys)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian with ``E|e|^2 = 1``."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
