"""Small shared helpers: seed derivation and content hashing."""

from __future__ import annotations

import hashlib
from pathlib import Path


def derive_seed(base: int, *parts) -> int:
    """Derive a stable 32-bit seed from a base seed and a label path.

    The derivation is a SHA-256 of the textual components, so it is stable
    across platforms, Python versions, and process boundaries.
    """
    text = "|".join([str(int(base)), *[str(p) for p in parts]])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
