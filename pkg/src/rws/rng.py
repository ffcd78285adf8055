"""Deterministic, splittable random streams for parallel Monte Carlo.

A stream is identified by ``(master_seed, stream_id)``.  The i-th variate of
a stream is a 64-bit avalanche hash of ``(key, i)`` where the key itself is a
hash of the identifying pair, so any position of any stream is computable in
O(1) with no global state.  Replicates, scenery sites and purpose-specific
substreams can therefore be evaluated lazily, out of order, in chunks of any
size and from any worker process with bit-identical results.

Streams intended to be independent must differ in ``stream_id`` (or in a
``derive`` tag); parallel code keys streams by replicate index, never by
worker identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "mix64",
    "child_id",
    "stream_key",
    "counter_uniforms",
    "derived_keys",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
_KEY_SALT = np.uint64(0xD6E8FEB86659FD93)
_ONE = np.uint64(1)
_U64_MASK = 0xFFFFFFFFFFFFFFFF
_UNIT = 2.0**-53


def _u64(x):
    """Coerce ints / int arrays to uint64 with two's-complement wrapping."""
    if isinstance(x, np.ndarray):
        if x.dtype == np.uint64:
            return x
        return x.astype(np.int64, copy=False).view(np.uint64)
    return np.uint64(int(x) & _U64_MASK)


def mix64(z):
    """SplitMix64 finalizer (Stafford mix13) on uint64 scalars or arrays."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_A
        z = (z ^ (z >> np.uint64(27))) * _MIX_B
        return z ^ (z >> np.uint64(31))


def child_id(stream_id, tag):
    """Stream id of the child ``tag`` of ``stream_id`` (broadcasts over arrays)."""
    with np.errstate(over="ignore"):
        return mix64(_u64(stream_id) * _GOLDEN + _u64(tag) + _ONE)


def stream_key(master_seed, stream_id):
    """Hash key of the stream ``(master_seed, stream_id)`` (broadcasts)."""
    with np.errstate(over="ignore"):
        return mix64(mix64(_u64(master_seed) ^ _KEY_SALT) + _GOLDEN * _u64(stream_id))


def counter_uniforms(key, counters):
    """Uniform [0,1) variates of the keyed stream at the given counter positions.

    ``key`` and ``counters`` broadcast, so ``counter_uniforms(keys[:, None],
    np.arange(n))`` yields a whole chunk of replicate streams at once.
    Counters may be signed (e.g. scenery site indices); they wrap to uint64.
    """
    with np.errstate(over="ignore"):
        bits = mix64(key + _GOLDEN * _u64(counters))
    return (bits >> np.uint64(11)).astype(np.float64) * _UNIT


@dataclass(frozen=True)
class RngStream:
    """Immutable descriptor of one deterministic random stream."""

    master_seed: int
    stream_id: int = 0

    @property
    def key(self) -> np.uint64:
        return stream_key(self.master_seed, self.stream_id)

    def derive(self, tag: int) -> "RngStream":
        """Child stream; distinct tags give streams passing independence tests."""
        return RngStream(self.master_seed, int(child_id(self.stream_id, tag)))

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        """The stream's variates at counters ``start .. start+count-1``."""
        counters = np.arange(start, start + count, dtype=np.uint64)
        return counter_uniforms(self.key, counters)

    def uniform_at(self, counters) -> np.ndarray:
        """Random access: variates at arbitrary counter positions."""
        return counter_uniforms(self.key, np.asarray(counters))


def derived_keys(stream: RngStream, tag: int, indices) -> np.ndarray:
    """Keys of ``stream.derive(tag).derive(i)`` for an array of indices.

    Exactly matches the scalar ``derive`` chain, letting chunked kernels and
    the one-replicate-at-a-time API consume identical variates.
    """
    ids = child_id(child_id(stream.stream_id, tag), np.asarray(indices))
    return stream_key(stream.master_seed, ids)
