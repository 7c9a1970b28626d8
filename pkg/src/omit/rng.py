"""Deterministic random streams.

Two flavours are used:

* ``counter_uniforms`` is a stateless, counter-based generator: the uniform
  for a given (key, unit, imputation) triple is a pure function of those
  integers, so imputation draws do not depend on iteration order or on how
  work is split across processes.
* ``substream`` hands out a seeded ``numpy.random.Generator`` for a named
  purpose, keyed by integers through ``SeedSequence.spawn_key``.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps modulo 2**64, which is what splitmix64 wants
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix_key(*parts: int) -> int:
    """Fold a sequence of integers into one 64-bit key."""
    h = np.zeros(1, dtype=np.uint64)
    for p in parts:
        h = _splitmix64(h ^ np.array([int(p) & _MASK64], dtype=np.uint64))
    return int(h[0])


def counter_uniforms(key: int, units, imputation: int) -> np.ndarray:
    """Uniform(0, 1) draws for ``units`` under imputation index ``imputation``.

    Each value depends only on (key, unit, imputation).
    """
    units = np.asarray(units, dtype=np.uint64)
    k = np.uint64(mix_key(key, imputation))
    with np.errstate(over="ignore"):
        z = _splitmix64(_splitmix64(units ^ k) + k)
    # top 53 bits -> double in [0, 1)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def name_code(name: str) -> int:
    """Stable integer code for a purpose/method/scenario label."""
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for the substream addressed by ``keys``.

    String keys are converted with ``name_code``.
    """
    spawn = tuple(name_code(k) if isinstance(k, str) else int(k) for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=spawn)
    return np.random.Generator(np.random.PCG64(ss))
