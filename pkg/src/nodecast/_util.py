"""Shared helpers: seeded RNG derivation and file digests."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


def derive_seed(*parts: int) -> int:
    """Collapse an integer key path into one 64-bit seed.

    Uses numpy's SeedSequence so that derived streams are statistically
    independent and stable across platforms.
    """
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(*parts: int) -> np.random.Generator:
    """PCG64 generator keyed by an integer path (seed, subkey, subkey, ...)."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return np.random.Generator(np.random.PCG64(ss))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
