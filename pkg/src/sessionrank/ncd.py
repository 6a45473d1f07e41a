"""Normalized compression distance over short UTF-8 texts.

The compressor is pinned so scores reproduce bit-for-bit across processes:
raw DEFLATE (RFC 1951) at maximum level, no container framing or checksums.
Texts are normalized (lowercased, whitespace runs collapsed) before
compression because case and spacing noise dominate short-string sizes.

NCD is asymmetric in its concatenation term; no symmetry is promised.
"""

from __future__ import annotations

import re
import zlib
from functools import lru_cache

COMPRESSION_LEVEL = 9
_RAW_DEFLATE_WBITS = -15  # raw stream: no zlib/gzip header or checksum
_WS_RUN = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase and collapse whitespace runs; strips leading/trailing space."""
    return _WS_RUN.sub(" ", text.strip()).lower()


@lru_cache(maxsize=1 << 16)
def compressed_size(text: str) -> int:
    """Size in bytes of the pinned DEFLATE stream of ``text``.

    Deterministic: identical inputs always yield identical sizes. Even the
    empty string costs a couple of header bytes, so the result is >= 1.
    """
    compressor = zlib.compressobj(COMPRESSION_LEVEL, zlib.DEFLATED, _RAW_DEFLATE_WBITS)
    return len(compressor.compress(text.encode("utf-8")) + compressor.flush())


def ncd(a: str, b: str) -> float:
    """Normalized compression distance between two texts.

    Computes (C(a+b) - min(C(a), C(b))) / max(C(a), C(b)) on the normalized
    texts, concatenated first-argument-then-second with a single space at
    the seam. Values land in [0, 1.1]; real compressors can slightly
    exceed 1 on unrelated inputs.

    Raises ValueError when both texts normalize to empty (the max term
    degenerates).
    """
    na, nb = normalize_text(a), normalize_text(b)
    if not na and not nb:
        raise ValueError("ncd undefined: both texts empty after normalization")
    ca = compressed_size(na)
    cb = compressed_size(nb)
    cab = compressed_size(na + " " + nb)
    return (cab - min(ca, cb)) / max(ca, cb)
