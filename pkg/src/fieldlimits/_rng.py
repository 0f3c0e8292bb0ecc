"""Deterministic seeding for replicated experiments.

Every replicate draws from its own generator, seeded by a 128-bit hash of
(master seed, replicate index, model digest).  Statistics computed from
per-replicate results assembled in index order are therefore invariant
under how replicates are distributed across worker processes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np


def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and no whitespace so digests are stable."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def digest_of(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def replicate_seed(master_seed: int, replicate: int, digest: str = "") -> int:
    """128-bit per-replicate seed; stable across worker counts."""
    raw = f"{master_seed}|{replicate}|{digest}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(raw, digest_size=16).digest(), "little")


def replicate_rng(master_seed: int, replicate: int, digest: str = "") -> np.random.Generator:
    return np.random.default_rng(replicate_seed(master_seed, replicate, digest))


def random_bigint(rng: np.random.Generator, bits: int) -> int:
    """Uniform integer in [0, 2**bits)."""
    nbytes = (bits + 7) // 8
    value = int.from_bytes(rng.bytes(nbytes), "little")
    return value & ((1 << bits) - 1)


def random_int_below(rng: np.random.Generator, bound: int) -> int:
    """Uniform integer in [0, bound) for arbitrary-precision bounds."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    bits = bound.bit_length() + 64
    span = (1 << bits) // bound * bound
    while True:
        candidate = random_bigint(rng, bits)
        if candidate < span:
            return candidate % bound
