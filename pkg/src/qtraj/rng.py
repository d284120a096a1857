"""Reproducible random-number streams for stochastic trajectories.

Each trajectory owns an independent :class:`numpy.random.Generator` (PCG64)
whose seed is derived deterministically from ``(master_seed, index)`` by a
SplitMix64 expansion.  The derivation is part of the public contract: given
the same master seed, trajectory ``i`` consumes the same draws regardless of
scheduling or how many other trajectories run.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """One SplitMix64 output step (public-domain constants)."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Derive the 64-bit seed for stream ``index`` from ``master_seed``.

    Two chained SplitMix64 rounds over ``master_seed + index*golden`` — the
    standard way to expand one seed into decorrelated per-worker seeds.
    """
    if index < 0:
        raise ValueError("stream index must be non-negative")
    state = (int(master_seed) + index * _GOLDEN) & _MASK64
    return _splitmix64(_splitmix64(state))


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    """Return the PCG64 generator for trajectory ``index``."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, index)))


class UniformSource:
    """Buffered uniform [0,1) draws from a single generator.

    Solver kernels pull draws one at a time (two per jump); buffering keeps
    the per-draw cost negligible while preserving the exact draw order.
    """

    __slots__ = ("_gen", "_buf", "_pos")

    def __init__(self, gen: np.random.Generator, block: int = 1024):
        self._gen = gen
        self._buf = gen.random(block)
        self._pos = 0

    def take(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._buf = self._gen.random(self._buf.shape[0])
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)
