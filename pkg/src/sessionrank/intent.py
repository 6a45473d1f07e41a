"""Intent-aware context features.

Instead of trusting recency, pick the single past click best aligned with
the current query - smallest compression distance for the textual route,
highest cosine for the embedding route - and score SERP items against that
reference click. Selection happens once per impression and is shared by all
of its items. Ties resolve to the most recent click.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sessionrank.data import ClickContext
from sessionrank.embed import cosine_similarity
from sessionrank.ncd import ncd

TEXTUAL = "textual"
EMBEDDING = "embedding"


@dataclass(frozen=True)
class ReferenceSelection:
    """Chosen reference click: ``index`` is 1-based recency (1 = most recent),
    or None when the context is empty."""

    index: int | None
    mode: str
    score: float | None

    def __post_init__(self) -> None:
        if self.mode not in (TEXTUAL, EMBEDDING):
            raise ValueError(f"unknown reference mode {self.mode!r}")


def select_reference_textual(query_text: str, context: ClickContext) -> ReferenceSelection:
    """argmin over context clicks of ncd(query, click title); ties -> most recent."""
    if not context:
        return ReferenceSelection(index=None, mode=TEXTUAL, score=None)
    best_j, best = None, None
    for j, click in enumerate(context.clicks, start=1):
        score = ncd(query_text, click.item.title)
        if best is None or score < best:
            best_j, best = j, score
    return ReferenceSelection(index=best_j, mode=TEXTUAL, score=best)


def select_reference_embedding(
    query_emb: np.ndarray, context_embeddings: np.ndarray | None
) -> ReferenceSelection:
    """argmax over context clicks of cosine(query, click); ties -> most recent."""
    if context_embeddings is None or len(context_embeddings) == 0:
        return ReferenceSelection(index=None, mode=EMBEDDING, score=None)
    best_j, best = None, None
    for j, row in enumerate(context_embeddings, start=1):
        score = cosine_similarity(query_emb, row)
        if best is None or score > best:
            best_j, best = j, score
    return ReferenceSelection(index=best_j, mode=EMBEDDING, score=best)


def intent_textual_feature(
    item_title: str, ref: ReferenceSelection, context: ClickContext
) -> float | None:
    if ref.mode != TEXTUAL:
        raise ValueError(f"expected a textual reference, got mode {ref.mode!r}")
    if ref.index is None:
        return None
    return ncd(item_title, context.clicks[ref.index - 1].item.title)


def intent_embedding_feature(
    item_emb: np.ndarray,
    ref: ReferenceSelection,
    context_embeddings: np.ndarray | None,
) -> float | None:
    if ref.mode != EMBEDDING:
        raise ValueError(f"expected an embedding reference, got mode {ref.mode!r}")
    if ref.index is None:
        return None
    return cosine_similarity(item_emb, context_embeddings[ref.index - 1])
