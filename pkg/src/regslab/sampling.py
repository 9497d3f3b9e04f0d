"""Reproducible random streams and squared-norm index sampling.

Streams are SplitMix64 sequences addressed by counter: draw ``c`` of the
stream with key ``k`` is ``mix64(k + (c + 1) * GOLDEN)``, which is exactly
the ``c``-th output of a SplitMix64 generator seeded with ``k``. Period is
2**64. Random access by counter lets a batch of trials take its ``c``-th
draws in one vectorized call and still match a single-trial replay bit for
bit.

Keys are ``mix64(mix64(master_seed) + stream_id * STREAM_STRIDE)``. For a
fixed master seed the map ``stream_id -> key`` is injective because both
steps are bijections on 64-bit integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
STREAM_STRIDE = 0xD1B54A32D192ED03  # odd, so multiplication mod 2**64 is a bijection
INV_2_53 = 1.0 / (1 << 53)

_U64 = np.uint64


def mix64(z: int) -> int:
    """SplitMix64 output finalizer on a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=_U64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _U64(MIX1)
        z = (z ^ (z >> _U64(27))) * _U64(MIX2)
    return z ^ (z >> _U64(31))


def stream_key(master_seed: int, stream_id: int) -> int:
    return mix64((mix64(master_seed & MASK64) + (stream_id & MASK64) * STREAM_STRIDE) & MASK64)


def stream_keys(master_seed: int, stream_ids) -> np.ndarray:
    base = mix64(master_seed & MASK64)
    ids = np.asarray(stream_ids, dtype=_U64)
    with np.errstate(over="ignore"):
        return mix64_array(_U64(base) + ids * _U64(STREAM_STRIDE))


def uniforms_at(keys: np.ndarray, counter: int) -> np.ndarray:
    """Draw number ``counter`` from every stream in ``keys``, as doubles in [0, 1)."""
    with np.errstate(over="ignore"):
        state = keys + _U64(((counter + 1) * GOLDEN) & MASK64)
    bits = mix64_array(state) >> _U64(11)
    return bits.astype(np.float64) * INV_2_53


class RngStream:
    """Single-owner stream; ``counter`` is the index of the next draw."""

    def __init__(self, master_seed: int, stream_id: int = 0, counter: int = 0):
        self.master_seed = master_seed & MASK64
        self.stream_id = stream_id & MASK64
        self.key = stream_key(master_seed, stream_id)
        self.counter = counter

    def next_uint64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * GOLDEN) & MASK64)

    def uniform(self) -> float:
        return (self.next_uint64() >> 11) * INV_2_53

    def uniforms(self, size: int) -> np.ndarray:
        counters = np.arange(self.counter, self.counter + size, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = _U64(self.key) + (counters + _U64(1)) * _U64(GOLDEN)
        self.counter += size
        return (mix64_array(state) >> _U64(11)).astype(np.float64) * INV_2_53

    def normals(self, size: int) -> np.ndarray:
        """Standard normals by Box-Muller; consumes ``2 * ceil(size / 2)`` draws."""
        pairs = (size + 1) // 2
        u = self.uniforms(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:size]

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id}, counter={self.counter})"


def derive_stream(master_seed: int, trial_id: int) -> RngStream:
    return RngStream(master_seed, trial_id)


@dataclass(frozen=True)
class DiscreteDistribution:
    weights: np.ndarray
    cumulative: np.ndarray
    support: np.ndarray
    total: float

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.total

    @property
    def last_support(self) -> int:
        return int(self.support[-1])


def build_distribution(sq_norms) -> DiscreteDistribution:
    w = np.array(sq_norms, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    support = np.flatnonzero(w > 0)
    if support.size == 0:
        raise ValueError("all weights are zero; nothing can be sampled")
    cumulative = np.cumsum(w)
    for arr in (w, cumulative, support):
        arr.setflags(write=False)
    return DiscreteDistribution(weights=w, cumulative=cumulative, support=support,
                                total=float(cumulative[-1]))


def sample_index(dist: DiscreteDistribution, u: float) -> int:
    """Inverse CDF: the index ``i`` with ``cum[i-1] <= u * total < cum[i]``."""
    i = int(np.searchsorted(dist.cumulative, u * dist.total, side="right"))
    # u * total can round up to total
    return min(i, dist.last_support)


def sample_indices(dist: DiscreteDistribution, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(dist.cumulative, u * dist.total, side="right")
    return np.minimum(idx, dist.last_support)


def sample(dist: DiscreteDistribution, rng: RngStream) -> int:
    return sample_index(dist, rng.uniform())
