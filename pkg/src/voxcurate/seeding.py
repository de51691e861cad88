"""Stable derivation of per-entity RNG seeds from a global seed.

Python's builtin hash() is salted per process, so every shuffle that must be
reproducible across runs derives its seed here instead.
"""

from __future__ import annotations

import hashlib


def derived_seed(*parts: object) -> int:
    """Derive a 64-bit seed from the given parts, stably across runs and platforms."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, bytes):
            data = part
        elif isinstance(part, int):
            data = part.to_bytes(16, "little", signed=True)
        else:
            data = str(part).encode("utf-8")
        h.update(len(data).to_bytes(4, "little"))
        h.update(data)
    return int.from_bytes(h.digest(), "little")
