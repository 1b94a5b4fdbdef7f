"""Deterministic sub-seed derivation.

All randomness in a run flows from a single base seed; independent streams
(sampler, weight init, evaluation at a given step, ...) get their own seeds
derived by hashing the base seed together with a stream label. blake2s is
stable across platforms and interpreter versions, unlike ``hash()``.
"""

from __future__ import annotations

import hashlib

import torch


def derive_seed(base: int, label: str) -> int:
    digest = hashlib.blake2s(f"{base}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") % (2**63 - 1)


def new_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen
