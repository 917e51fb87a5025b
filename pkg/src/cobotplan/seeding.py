"""Deterministic seed derivation.

Per-episode and per-trial seeds are derived by hashing a root seed with a
counter instead of drawing from a shared stream, so results are identical
no matter how work is partitioned across workers.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *parts) -> int:
    """Stable 63-bit seed from a root seed and arbitrary labels."""
    text = f"{root}|" + "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
