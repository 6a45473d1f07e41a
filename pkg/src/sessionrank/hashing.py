"""Pinned, process-independent hashing helpers.

Everything that must reproduce across runs, processes and platforms hashes
through 64-bit FNV-1a instead of Python's salted ``hash``.
"""

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes, seed: int = 0) -> int:
    """64-bit FNV-1a of ``data``, with ``seed`` folded into the offset basis."""
    h = FNV64_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h


def stable_fraction(key: str, salt: str = "") -> float:
    """Deterministic value in [0, 1) for hash-based data splits."""
    return fnv1a64(f"{salt}:{key}".encode("utf-8")) / 2.0**64


def derive_seed(seed: int, label: str) -> int:
    """Split one root seed into independent per-component streams."""
    return fnv1a64(f"{seed}:{label}".encode("utf-8"))
