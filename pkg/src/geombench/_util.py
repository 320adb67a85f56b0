"""Seed derivation and canonical serialization helpers.

Everything downstream that claims byte-determinism funnels through these:
seeds are derived by hashing, never by Python's randomized ``hash()``, and
JSON is emitted with sorted keys and no whitespace so identical values give
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def derive_seed(seed: int, *parts: object) -> int:
    """Derive a stable 63-bit child seed from a parent seed and salt parts.

    Uses blake2b so the derivation is identical across platforms and
    processes (unlike ``hash()``, which is randomized per process).
    """
    key = ":".join([str(int(seed))] + [str(p) for p in parts]).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF


def canonical_json(obj: Any) -> str:
    """Serialize to compact, key-sorted JSON (stable bytes for stable values)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj: Any) -> str:
    """Short hex digest identifying a configuration object."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]
