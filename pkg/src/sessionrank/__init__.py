"""Session-contextualized search ranking toolkit.

Builds click-context ranking features (compression distance, embedding
similarity, intent-aware references, attention sequence encoders), trains
small lambdaRank scorers over them, and reports MRR-of-sale lifts across a
ladder of feature variants on reproducible synthetic session logs.
"""

__version__ = "0.1.0"

from sessionrank.data import (
    BASE_FEATURE_DIM,
    CONTEXT_WINDOW,
    ClickContext,
    ClickEvent,
    EngagementLabel,
    Item,
    Query,
    SerpImpression,
    SerpItem,
    Session,
)

__all__ = [
    "BASE_FEATURE_DIM",
    "CONTEXT_WINDOW",
    "ClickContext",
    "ClickEvent",
    "EngagementLabel",
    "Item",
    "Query",
    "SerpImpression",
    "SerpItem",
    "Session",
    "__version__",
]
