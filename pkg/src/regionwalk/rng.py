"""Deterministic, splittable random streams.

Every consumer derives its own generator from ``(seed, stream_name)`` so the
order in which components draw numbers never affects any other component.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Return a PCG64 generator keyed by ``seed`` and a stream ``name``.

    The same pair always yields the same sequence, on every platform.
    Distinct names give statistically independent streams.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.Generator(np.random.PCG64(seq))


def uniform_init(seed: int, name: str, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform weights in ``[-1/sqrt(fan_in), +1/sqrt(fan_in)]``.

    Keeps pre-activation variance bounded regardless of layer width.
    """
    bound = 1.0 / float(np.sqrt(fan_in))
    return stream_rng(seed, name).uniform(-bound, bound, size=shape)
