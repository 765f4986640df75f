"""Small numeric helpers shared across modules."""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_key(seed) -> tuple[int, ...]:
    """Normalize an int or sequence-of-ints seed into a tuple of ints."""
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def stream_rng(*key: int) -> np.random.Generator:
    """Deterministic generator for a counter-based stream key.

    Every distinct key yields an independent, reproducible stream, so adding
    new entities (edges, trials, schedule steps) never perturbs draws made
    under other keys.
    """
    return np.random.default_rng([int(k) & _MASK64 for k in key])


def logsumexp(a, axis=None):
    """log(sum(exp(a))) with max-shift; tolerates -inf entries."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        s = np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True)) + shift
    if axis is None:
        return float(s.reshape(()))
    return np.squeeze(s, axis=axis)
