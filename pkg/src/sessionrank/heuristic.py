"""Autoregressive click-context features: last click and last five clicks.

Four features relate a SERP item to the session's recent clicks:

* ``ncd_lc``     - compression distance between the item title and the most
                   recent click's title
* ``cossim_lc``  - cosine between the item embedding and the most recent
                   click's embedding
* ``ncd_l5c``    - compression distance between the item title and the
                   available (up to five) click titles concatenated
                   oldest-to-newest
* ``cossim_l5c`` - mean cosine between the item embedding and each available
                   click embedding

Every feature is None when the context is empty; partial contexts (< 5
clicks) use whatever is available instead of dropping the impression.
Cosine features take a precomputed context embedding matrix (one row per
click, most-recent-first) so per-impression work is shared across items.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sessionrank.data import ClickContext
from sessionrank.embed import cosine_similarity
from sessionrank.ncd import ncd


@dataclass(frozen=True)
class HeuristicFeatureSet:
    ncd_lc: float | None
    cossim_lc: float | None
    ncd_l5c: float | None
    cossim_l5c: float | None


def ncd_last_click(item_title: str, context: ClickContext) -> float | None:
    if not context:
        return None
    return ncd(item_title, context.clicks[0].item.title)


def ncd_last5(item_title: str, context: ClickContext) -> float | None:
    if not context:
        return None
    concat = " ".join(reversed(context.titles()))  # oldest-to-newest
    return ncd(item_title, concat)


def cossim_last_click(
    item_emb: np.ndarray, context_embeddings: np.ndarray | None
) -> float | None:
    """Cosine to the most recent click. ``context_embeddings`` rows are
    most-recent-first; None or empty means no context."""
    if context_embeddings is None or len(context_embeddings) == 0:
        return None
    return cosine_similarity(item_emb, context_embeddings[0])


def cossim_last5(
    item_emb: np.ndarray, context_embeddings: np.ndarray | None
) -> float | None:
    """Mean cosine over the available context clicks."""
    if context_embeddings is None or len(context_embeddings) == 0:
        return None
    values = [cosine_similarity(item_emb, row) for row in context_embeddings]
    return float(np.mean(values))


def heuristic_features(
    item_title: str,
    item_emb: np.ndarray,
    context: ClickContext,
    context_embeddings: np.ndarray | None,
) -> HeuristicFeatureSet:
    return HeuristicFeatureSet(
        ncd_lc=ncd_last_click(item_title, context),
        cossim_lc=cossim_last_click(item_emb, context_embeddings),
        ncd_l5c=ncd_last5(item_title, context),
        cossim_l5c=cossim_last5(item_emb, context_embeddings),
    )
