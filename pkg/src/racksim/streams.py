"""Deterministic derivation of named random streams from one master seed.

Every stochastic component (arrivals, service draws, tie-breaks, rate
perturbation, per-cell sweep seeds) pulls from its own generator, seeded by
mixing the master seed with a label path. Two runs with the same master seed
therefore consume identical random sequences regardless of how other streams
are interleaved.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # SplitMix64 finalizer; full-period 64-bit mix.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def stream_seed(master_seed: int, *labels: object) -> int:
    """64-bit seed for the stream identified by ``labels`` under ``master_seed``.

    Labels are stringified, hashed with FNV-1a and folded into the running
    state through SplitMix64, so any change to the master seed or to any label
    yields an unrelated seed.
    """
    x = _splitmix64(master_seed & _MASK64)
    for label in labels:
        x = _splitmix64(x ^ _fnv1a64(str(label)))
    return x


def stream_rng(master_seed: int, *labels: object) -> np.random.Generator:
    """Independent PCG64 generator for the named stream."""
    return np.random.Generator(np.random.PCG64(stream_seed(master_seed, *labels)))
