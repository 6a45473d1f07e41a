"""Domain types: sessions, click events, SERP impressions and labels.

All types are immutable after construction and safe to share across threads.
Base features are stored as plain float tuples so sessions compare by value
(round-trip tests rely on exact equality).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Union

# Context window: how many of the most recent prior clicks an impression sees.
CONTEXT_WINDOW = 5

# Width of the synthetic stand-in for the production ranker's base features.
BASE_FEATURE_DIM = 8

MAX_TITLE_CHARS = 200
MAX_SERP_ITEMS = 100


class EngagementLabel(IntEnum):
    """Graded engagement outcome for one SERP item."""

    NONE = 0
    CLICK = 1
    SALE = 2


@dataclass(frozen=True)
class Item:
    id: str
    title: str

    def __post_init__(self) -> None:
        if not self.title.strip():
            raise ValueError(f"item {self.id!r}: title empty after trimming")
        if len(self.title) > MAX_TITLE_CHARS:
            raise ValueError(
                f"item {self.id!r}: title longer than {MAX_TITLE_CHARS} chars"
            )


@dataclass(frozen=True)
class ClickEvent:
    """One click in the session timeline."""

    ordinal: int
    item: Item

    def __post_init__(self) -> None:
        if self.ordinal < 0:
            raise ValueError("click ordinal must be nonnegative")


@dataclass(frozen=True)
class Query:
    text: str
    session_id: str
    ordinal: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class ClickContext:
    """Up to CONTEXT_WINDOW most recent prior clicks, most-recent-first."""

    clicks: tuple[ClickEvent, ...] = ()

    def __post_init__(self) -> None:
        if len(self.clicks) > CONTEXT_WINDOW:
            raise ValueError(f"context holds at most {CONTEXT_WINDOW} clicks")
        ordinals = [c.ordinal for c in self.clicks]
        if any(older >= newer for newer, older in zip(ordinals, ordinals[1:])):
            raise ValueError("context clicks must be ordered by descending ordinal")

    def __len__(self) -> int:
        return len(self.clicks)

    def __bool__(self) -> bool:
        return bool(self.clicks)

    def titles(self) -> tuple[str, ...]:
        return tuple(c.item.title for c in self.clicks)


@dataclass(frozen=True)
class SerpItem:
    """One result-page item with its base features and engagement label."""

    item: Item
    base_features: tuple[float, ...]
    label: EngagementLabel

    def __post_init__(self) -> None:
        if not all(f == f and abs(f) != float("inf") for f in self.base_features):
            raise ValueError(f"item {self.item.id!r}: non-finite base feature")


@dataclass(frozen=True)
class SerpImpression:
    """A query plus its ordered candidate items and rebuilt click context."""

    session_id: str
    query: Query
    items: tuple[SerpItem, ...]
    context: ClickContext = ClickContext()

    def __post_init__(self) -> None:
        if not 2 <= len(self.items) <= MAX_SERP_ITEMS:
            raise ValueError(
                f"impression needs 2..{MAX_SERP_ITEMS} items, got {len(self.items)}"
            )
        dims = {len(si.base_features) for si in self.items}
        if len(dims) != 1:
            raise ValueError("base feature dimension differs across impression items")
        for click in self.context.clicks:
            if click.ordinal >= self.query.ordinal:
                raise ValueError("context click not strictly before query ordinal")

    @property
    def ordinal(self) -> int:
        return self.query.ordinal

    def labels(self) -> tuple[int, ...]:
        return tuple(int(si.label) for si in self.items)


SessionEvent = Union[ClickEvent, SerpImpression]


def event_ordinal(event: SessionEvent) -> int:
    return event.ordinal if isinstance(event, ClickEvent) else event.query.ordinal


@dataclass(frozen=True)
class Session:
    """One buyer visit: interleaved clicks and impressions in timeline order."""

    id: str
    epoch: int
    events: tuple[SessionEvent, ...]

    def __post_init__(self) -> None:
        ordinals = [event_ordinal(e) for e in self.events]
        for earlier, later in zip(ordinals, ordinals[1:]):
            if later <= earlier:
                raise ValueError(f"session {self.id!r}: ordinals not strictly increasing")

    def clicks(self) -> list[ClickEvent]:
        return [e for e in self.events if isinstance(e, ClickEvent)]

    def impressions(self) -> list[SerpImpression]:
        return [e for e in self.events if isinstance(e, SerpImpression)]
