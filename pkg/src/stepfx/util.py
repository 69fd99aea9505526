"""Shared helpers: deterministic seed derivation and tiny conversions."""

from __future__ import annotations

import hashlib

import numpy as np


def seed_from(*parts) -> int:
    """Derive a stable 64-bit seed from a tuple of printable parts.

    Uses SHA-256 over the string forms, so derived streams are independent
    of Python's hash randomization and identical across platforms and runs.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_from(*parts) -> np.random.Generator:
    """A fresh PCG64 generator seeded from `seed_from(*parts)`."""
    return np.random.default_rng(seed_from(*parts))


def db_to_amp(db: float) -> float:
    return 10.0 ** (db / 20.0)


def amp_to_db(amp: float, floor: float = 1e-12) -> float:
    return 20.0 * np.log10(max(float(amp), floor))


def rms(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0
