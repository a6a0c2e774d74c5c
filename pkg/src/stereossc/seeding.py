"""Deterministic seed derivation.

All randomness in the package flows from one master seed. Sub-seeds are
derived by hashing, never by incrementing, so adding a consumer never
shifts the streams of existing ones.

Scheme: the master seed and the label parts are joined with '/' into a
UTF-8 string, hashed with SHA-256, and the first 8 bytes are read as a
little-endian unsigned integer truncated to 63 bits.

    derive_seed(7, "scene", 3)   # == derive_seed(7, "scene", "3")
"""

import hashlib


def derive_seed(master: int, *parts: "int | str") -> int:
    text = "/".join([str(int(master))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
