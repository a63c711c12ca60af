"""Canonical serialization and fingerprinting.

Every document the system persists or hashes goes through one byte form:
UTF-8 JSON, keys sorted lexicographically, no insignificant whitespace,
sets rendered as sorted arrays by their producers. Fingerprints are 64-bit
FNV-1a over those bytes, printed as 16 lowercase hex digits.
"""

from __future__ import annotations

import json
from typing import Any

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def canonical_dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(doc: Any) -> bytes:
    return canonical_dumps(doc).encode("utf-8")


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def fingerprint(doc: Any) -> str:
    """16 lowercase hex digits identifying the canonical form of ``doc``."""
    return f"{fnv1a64(canonical_bytes(doc)):016x}"
