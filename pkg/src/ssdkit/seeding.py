"""Stable seed derivation for reproducible per-item randomness."""

from __future__ import annotations

import hashlib

import numpy as np

_MAX_SEED = 2**63


def derive_seed(*parts) -> int:
    """Map a tuple of values to a stable 63-bit seed.

    Uses SHA-256 over the repr of the parts, so the result is identical
    across processes and platforms (the builtin ``hash`` is salted and
    must not be used for this).
    """
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % _MAX_SEED


def spawn_rng(*parts) -> np.random.Generator:
    """Generator seeded from :func:`derive_seed` of the parts."""
    return np.random.default_rng(derive_seed(*parts))
