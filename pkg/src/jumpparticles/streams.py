"""Counter-based random streams.

Every random number is a pure function of ``(seed, purpose, key...)``: a
chain of splitmix64 finalizers hashes the address into 64 bits, the top 53
of which become a uniform in (0, 1).  Nothing is stateful, so draws do not
depend on generation order, chunking of particles or thread scheduling.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_BELOW_ONE = 1.0 - 2.0 ** -53
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def purpose_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def hash_address(seed: int, purpose: str, *keys) -> np.ndarray:
    """Hash a (broadcast) integer address into uint64 words."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GOLDEN)
        h = _mix(h ^ _mix(np.uint64(purpose_id(purpose)) + _GOLDEN))
        for position, key in enumerate(keys, start=1):
            k = np.asarray(key).astype(np.int64).astype(np.uint64)
            salt = np.uint64(position) * _GOLDEN
            h = _mix(h ^ _mix(k + salt))
    return h


def bits_to_uniform(h: np.ndarray) -> np.ndarray:
    # (top 53 bits + 1/2) / 2**53, with the single top word (which rounds
    # to 1.0) pulled back to the largest double below 1
    return np.minimum(((h >> _S11).astype(np.float64) + 0.5) * _INV53, _BELOW_ONE)


@dataclass(frozen=True)
class StreamFamily:
    """A family of named, addressable random streams.

    ``overrides`` replaces the seed of individual purposes, which is how a
    common-random-number study varies one source of randomness (say the
    interaction partners) while holding the others fixed.
    """

    seed: int
    overrides: Mapping[str, int] = field(default_factory=dict)

    def seed_for(self, purpose: str) -> int:
        return int(self.overrides.get(purpose, self.seed))

    def uniform(self, purpose: str, *keys) -> np.ndarray:
        return bits_to_uniform(hash_address(self.seed_for(purpose), purpose, *keys))

    def normal(self, purpose: str, *keys) -> np.ndarray:
        return ndtri(self.uniform(purpose, *keys))

    def view(self, purpose: str, *keys) -> "KeyedStream":
        return KeyedStream(self, purpose, tuple(np.asarray(k) for k in keys))


@dataclass(frozen=True)
class KeyedStream:
    """A vector of streams sharing a purpose, one per entry of ``keys``.

    ``uniform(j, attempt)`` returns one uniform per stream for draw
    component ``j``; rejection samplers pass increasing ``attempt`` values.
    """

    family: StreamFamily
    purpose: str
    keys: tuple

    @property
    def size(self) -> int:
        return int(np.broadcast(*self.keys).size) if self.keys else 1

    def uniform(self, j: int = 0, attempt: int = 0) -> np.ndarray:
        u = self.family.uniform(self.purpose, *self.keys, j, attempt)
        return np.broadcast_to(u, np.broadcast(*self.keys).shape).copy() if self.keys else u

    def normal(self, j: int = 0, attempt: int = 0) -> np.ndarray:
        return ndtri(self.uniform(j, attempt))

    def subset(self, mask: np.ndarray) -> "KeyedStream":
        shape = np.broadcast(*self.keys).shape
        keys = tuple(np.broadcast_to(k, shape)[mask] for k in self.keys)
        return KeyedStream(self.family, self.purpose, keys)


class GeneratorStream:
    """Adapter giving a numpy ``Generator`` the ``KeyedStream`` interface.

    Useful for ad-hoc sampling outside the simulation engine, where
    addressable reproducibility is not needed.
    """

    def __init__(self, rng: np.random.Generator, size: int):
        self.rng = rng
        self._size = int(size)

    @property
    def size(self) -> int:
        return self._size

    def uniform(self, j: int = 0, attempt: int = 0) -> np.ndarray:
        u = self.rng.random(self._size)
        return np.where(u == 0.0, _INV53, u)

    def normal(self, j: int = 0, attempt: int = 0) -> np.ndarray:
        return self.rng.standard_normal(self._size)

    def subset(self, mask: np.ndarray) -> "GeneratorStream":
        return GeneratorStream(self.rng, int(np.count_nonzero(mask)))
