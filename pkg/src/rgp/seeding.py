"""Stable seed derivation.

Derived seeds must not depend on process state (hash randomization) or on
the order work is scheduled, so parallel and serial runs of the same
configuration produce identical artifacts.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *parts) -> int:
    """Deterministic 64-bit seed from a root seed and context labels."""
    h = hashlib.sha256(str(int(root)).encode("ascii"))
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(root: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *parts))
