"""Deterministic random stream derivation.

Every random draw in the package flows from one explicit 64-bit seed.
Independent streams are derived with a counter-based generator (Philox)
keyed by a hash of (seed, purpose tag); parallel sub-streams for batch
item ``index`` are obtained by jumping, so results never depend on
execution order or batch size.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_key", "stream"]

_MASK64 = (1 << 64) - 1


def derive_key(seed: int, tag: str) -> tuple[int, int]:
    """Hash (seed, tag) into a 128-bit Philox key, returned as two words."""
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed) & _MASK64
    digest = hashlib.blake2s(
        seed.to_bytes(8, "little") + tag.encode("utf-8"), digest_size=16
    ).digest()
    return (
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:], "little"),
    )


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Return the generator for sub-stream ``index`` of purpose ``tag``.

    The same (seed, tag, index) triple always yields an identical stream,
    on any platform, in any call order.
    """
    if index < 0:
        raise ValueError(f"stream index must be >= 0, got {index}")
    bitgen = np.random.Philox(key=np.array(derive_key(seed, tag), dtype=np.uint64))
    if index:
        bitgen = bitgen.jumped(index)
    return np.random.Generator(bitgen)
