"""Seeded synthetic session generator.

Sessions follow a latent shopping intent (a catalog category) that switches
with a small per-event probability and sometimes revisits an earlier intent.
Browse clicks track the current intent, except that once other intents have
been visited a fraction of clicks strays back into them - earlier shopping
threads stay alive in the click context, which is what makes query-aligned
reference selection worth more than plain recency. Impression candidates mix
current-intent items, distractors from stale intents and random items;
engagement odds scale with exp(beta * intent_match) on top of a base
relevance that the base features (and only they) can see. With beta = 0 the
labels are independent of anything contextual, which gives the null-control
mode used to guard against leakage artifacts.

Fully deterministic under the config seed: structure and label draws use
separate fixed streams, and the engagement intercept is calibrated against
the configured click rate before any label is drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

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

_ALPHABET = "abcdefghijklmnopqrstuvwxyz"

# Engagement model internals (not exposed in the config on purpose: they set
# the scale that beta and click_rate are calibrated against).
_BASE_RELEVANCE_COEF = 1.0
_RELEVANCE_NOISE = 0.5
_FEATURE_COEFS = (1.0, 0.8, 0.6, 0.4)
_FEATURE_NOISE = 0.4


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 7
    catalog_size: int = 1200
    n_categories: int = 12
    vocab_per_category: int = 25
    n_sessions: int = 400
    n_epochs: int = 14
    mean_impressions_per_session: float = 6.0
    mean_clicks_per_session: float = 7.0
    switch_prob: float = 0.1
    revisit_prob: float = 0.5
    stray_click_prob: float = 0.4
    beta: float = 2.0
    click_rate: float = 0.18
    sale_rate: float = 0.35
    list_len: tuple[int, int] = (6, 12)

    def __post_init__(self) -> None:
        for name in ("switch_prob", "revisit_prob", "stray_click_prob", "click_rate", "sale_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        for name in ("catalog_size", "n_categories", "vocab_per_category", "n_sessions", "n_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        lo, hi = self.list_len
        if not 2 <= lo <= hi <= 100:
            raise ValueError(f"list_len must satisfy 2 <= lo <= hi <= 100, got {self.list_len}")


@dataclass(frozen=True)
class Catalog:
    items: tuple[Item, ...]
    categories: tuple[int, ...]  # parallel to items
    quality: tuple[float, ...]  # parallel latent engagement propensity
    head_terms: tuple[str, ...]  # one shared head term per category
    category_vocab: tuple[tuple[str, ...], ...]
    by_category: tuple[tuple[int, ...], ...] = field(repr=False)


def _pseudo_word(rng: np.random.Generator, taken: set[str]) -> str:
    while True:
        length = int(rng.integers(4, 9))
        word = "".join(_ALPHABET[i] for i in rng.integers(0, len(_ALPHABET), length))
        if word not in taken:
            taken.add(word)
            return word


def generate_catalog(config: GeneratorConfig) -> Catalog:
    """Deterministic catalog; titles mix a category head term with vocab words."""
    if config.vocab_per_category < 7:
        raise ValueError("vocab_per_category must be >= 7 for 3..8-word titles")
    rng = np.random.default_rng([config.seed, 11])
    taken: set[str] = set()
    head_terms = tuple(_pseudo_word(rng, taken) for _ in range(config.n_categories))
    category_vocab = tuple(
        tuple(_pseudo_word(rng, taken) for _ in range(config.vocab_per_category))
        for _ in range(config.n_categories)
    )
    items = []
    categories = []
    for idx in range(config.catalog_size):
        cat = idx % config.n_categories
        vocab = category_vocab[cat]
        n_words = int(rng.integers(2, 8))  # plus head term: 3..8 words total
        picks = rng.choice(len(vocab), size=n_words, replace=False)
        title = " ".join([head_terms[cat]] + [vocab[int(i)] for i in picks])
        items.append(Item(id=f"i{idx:05d}", title=title))
        categories.append(cat)
    quality = tuple(float(q) for q in rng.normal(0.0, 1.0, config.catalog_size))
    by_category = tuple(
        tuple(i for i, c in enumerate(categories) if c == cat)
        for cat in range(config.n_categories)
    )
    return Catalog(
        items=tuple(items),
        categories=tuple(categories),
        quality=quality,
        head_terms=head_terms,
        category_vocab=category_vocab,
        by_category=by_category,
    )


def _maybe_switch(
    rng: np.random.Generator, config: GeneratorConfig, intent: int, visited: list[int]
) -> int:
    if rng.random() >= config.switch_prob or config.n_categories < 2:
        return intent
    earlier = [c for c in visited if c != intent]
    if earlier and rng.random() < config.revisit_prob:
        new = earlier[int(rng.integers(len(earlier)))]
    else:
        new = int(rng.integers(config.n_categories - 1))
        if new >= intent:
            new += 1
    visited.append(new)
    return new


def _pick_item(rng: np.random.Generator, pool: tuple[int, ...], taken: set[int]) -> int | None:
    for _ in range(12):
        idx = pool[int(rng.integers(len(pool)))]
        if idx not in taken:
            return idx
    for idx in pool:
        if idx not in taken:
            return idx
    return None


def _make_query(rng: np.random.Generator, catalog: Catalog, intent: int) -> str:
    vocab = catalog.category_vocab[intent]
    n_words = int(rng.integers(2, 5))
    picks = rng.choice(len(vocab), size=n_words, replace=False)
    return " ".join([catalog.head_terms[intent]] + [vocab[int(i)] for i in picks])


def _calibrate_intercept(partial_logits: np.ndarray, target: float) -> float:
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if float(np.mean(expit(partial_logits + mid))) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_sessions(config: GeneratorConfig, catalog: Catalog) -> list[Session]:
    """Generate sessions with intent walks, browse clicks and labeled impressions."""
    rng_struct = np.random.default_rng([config.seed, 101])
    rng_label = np.random.default_rng([config.seed, 202])

    # Pass 1: session structure. Labels never influence structure, so the
    # engagement intercept can be calibrated afterwards over all impressions.
    protos = []
    all_partials: list[np.ndarray] = []
    for s in range(config.n_sessions):
        epoch = int(rng_struct.integers(config.n_epochs))
        intent = int(rng_struct.integers(config.n_categories))
        visited = [intent]
        n_impr = max(1, int(rng_struct.poisson(config.mean_impressions_per_session)))
        clicks_per_gap = config.mean_clicks_per_session / n_impr
        opens_with_impression = rng_struct.random() < 0.3

        events: list[tuple] = []
        for i in range(n_impr):
            n_browse = int(rng_struct.poisson(clicks_per_gap))
            if i == 0:
                n_browse = 0 if opens_with_impression else max(1, n_browse)
            for _ in range(n_browse):
                intent = _maybe_switch(rng_struct, config, intent, visited)
                # Stray clicks keep earlier shopping threads alive in the
                # context; impossible while the intent has never switched.
                click_cat = intent
                stale_intents = [c for c in dict.fromkeys(visited) if c != intent]
                if stale_intents and rng_struct.random() < config.stray_click_prob:
                    click_cat = stale_intents[int(rng_struct.integers(len(stale_intents)))]
                pool = catalog.by_category[click_cat]
                events.append(("click", pool[int(rng_struct.integers(len(pool)))]))
            intent = _maybe_switch(rng_struct, config, intent, visited)
            stale_intents = [c for c in dict.fromkeys(visited) if c != intent]

            n_items = int(rng_struct.integers(config.list_len[0], config.list_len[1] + 1))
            taken: set[int] = set()
            chosen: list[int] = []
            for _ in range(n_items):
                u = rng_struct.random()
                if u < 0.5:
                    cat = intent
                elif stale_intents and u < 0.75:
                    cat = stale_intents[int(rng_struct.integers(len(stale_intents)))]
                else:
                    cat = int(rng_struct.integers(config.n_categories))
                idx = _pick_item(rng_struct, catalog.by_category[cat], taken)
                if idx is None:
                    idx = _pick_item(rng_struct, tuple(range(len(catalog.items))), taken)
                if idx is None:
                    break
                taken.add(idx)
                chosen.append(idx)
            if len(chosen) < 2:
                continue

            relevance = np.array(
                [catalog.quality[idx] for idx in chosen]
            ) + rng_struct.normal(0.0, _RELEVANCE_NOISE, len(chosen))
            match = np.array(
                [1.0 if catalog.categories[idx] == intent else 0.0 for idx in chosen]
            )
            base = np.empty((len(chosen), BASE_FEATURE_DIM))
            for k, coef in enumerate(_FEATURE_COEFS):
                base[:, k] = coef * relevance + rng_struct.normal(
                    0.0, _FEATURE_NOISE, len(chosen)
                )
            base[:, len(_FEATURE_COEFS):] = rng_struct.normal(
                0.0, 1.0, (len(chosen), BASE_FEATURE_DIM - len(_FEATURE_COEFS))
            )
            partial = _BASE_RELEVANCE_COEF * relevance + config.beta * match
            all_partials.append(partial)
            query_text = _make_query(rng_struct, catalog, intent)
            events.append(("impr", query_text, chosen, base, partial))
        protos.append((f"s{s:06d}", epoch, events))

    if all_partials:
        intercept = _calibrate_intercept(np.concatenate(all_partials), config.click_rate)
    else:
        intercept = 0.0

    # Pass 2: draw labels and materialize Session objects.
    sessions = []
    for sid, epoch, events in protos:
        built: list = []
        for ordinal, event in enumerate(events):
            if event[0] == "click":
                built.append(ClickEvent(ordinal=ordinal, item=catalog.items[event[1]]))
                continue
            _, query_text, chosen, base, partial = event
            p_click = expit(partial + intercept)
            clicked = rng_label.random(len(chosen)) < p_click
            sold = clicked & (rng_label.random(len(chosen)) < config.sale_rate)
            serp_items = tuple(
                SerpItem(
                    item=catalog.items[idx],
                    base_features=tuple(float(v) for v in base[i]),
                    label=EngagementLabel.SALE
                    if sold[i]
                    else (EngagementLabel.CLICK if clicked[i] else EngagementLabel.NONE),
                )
                for i, idx in enumerate(chosen)
            )
            prior_clicks = [e for e in built if isinstance(e, ClickEvent)]
            context = ClickContext(tuple(reversed(prior_clicks[-CONTEXT_WINDOW:])))
            built.append(
                SerpImpression(
                    session_id=sid,
                    query=Query(text=query_text, session_id=sid, ordinal=ordinal),
                    items=serp_items,
                    context=context,
                )
            )
        sessions.append(Session(id=sid, epoch=epoch, events=tuple(built)))
    return sessions
