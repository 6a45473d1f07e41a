"""Deterministic hashed text embeddings and cosine similarity.

The hash embedder stands in for a production text encoder: a signed bag of
word unigrams and character trigrams, folded into ``dim`` buckets and
L2-normalized. The hash is pinned (64-bit FNV-1a, fixed seed constant,
sign from the top hash bit, bucket from the remaining bits) so vectors are
identical across processes and platforms.

Real externally-trained vectors can replace the stand-in through
``load_embedding_table`` without touching any feature code.
"""

from __future__ import annotations

import numpy as np

from sessionrank.hashing import fnv1a64
from sessionrank.ncd import normalize_text

DEFAULT_DIM = 64

# Fixed salt for the feature hash; changing it changes every vector.
HASH_SEED = 0x5E55_10C0_FFEE

_SIGN_BIT = 1 << 63
_BUCKET_MASK = _SIGN_BIT - 1


def _hash_features(text: str) -> list[str]:
    words = text.split(" ")
    feats = list(words)
    feats.extend(text[i : i + 3] for i in range(len(text) - 2))
    return feats


def embed_text(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Embed ``text`` into a unit-length vector of ``dim`` reals.

    Raises ValueError for text that is empty after normalization.
    """
    normalized = normalize_text(text)
    if not normalized:
        raise ValueError("cannot embed empty text")
    vec = np.zeros(dim, dtype=np.float64)
    for feat in _hash_features(normalized):
        h = fnv1a64(feat.encode("utf-8"), HASH_SEED)
        sign = -1.0 if h & _SIGN_BIT else 1.0
        vec[(h & _BUCKET_MASK) % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # All signed counts cancelled; essentially impossible for real titles.
        raise ArithmeticError(f"hashed features of {text!r} cancelled to zero")
    return vec / norm


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|), clamped into [-1, 1] against rounding."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


class HashEmbedder:
    """Caching wrapper around ``embed_text`` for featurization loops."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        key = normalize_text(text)
        vec = self._cache.get(key)
        if vec is None:
            vec = embed_text(key, self.dim)
            self._cache[key] = vec
        return vec


class EmbeddingTable:
    """Fixed lookup table of externally supplied vectors, keyed by normalized text."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.vectors = vectors
        self.dim = dim

    def __len__(self) -> int:
        return len(self.vectors)

    def embed(self, text: str) -> np.ndarray:
        key = normalize_text(text)
        try:
            return self.vectors[key]
        except KeyError:
            raise KeyError(f"no embedding for {key!r} in table") from None


def load_embedding_table(path: str) -> EmbeddingTable:
    """Load a table file: header ``dim=<n>`` then ``key<TAB>v1,v2,...`` lines."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise ValueError("embedding table must start with a 'dim=<n>' header")
        dim = int(header[4:])
        for row, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, payload = line.partition("\t")
            values = np.array([float(v) for v in payload.split(",")], dtype=np.float64)
            if values.shape[0] != dim:
                raise ValueError(
                    f"row {row}: expected {dim} values, got {values.shape[0]}"
                )
            vectors[normalize_text(key)] = values
    return EmbeddingTable(vectors, dim)


def save_embedding_table(table: EmbeddingTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={table.dim}\n")
        for key, vec in table.vectors.items():
            fh.write(key + "\t" + ",".join(repr(float(v)) for v in vec) + "\n")
