"""Offline evaluation: MRR of sale items and the progressive lift ladder.

The ladder trains (on identical splits and seeds) a base ranker plus
progressively enriched variants and reports one lift row per comparison:

    MLR+<each single heuristic feature>  vs MLR
    P1+<each intent feature>             vs P1
    P2+<each sequence feature>           vs P2

where P1 = MLR plus all four heuristic features and P2 = P1 plus both
intent features. MRR-of-sale is averaged per impression; impressions
without a sale item are excluded (reciprocal rank is undefined there).
Each row carries a delta-method standard error computed from paired
per-impression reciprocal ranks - point lifts alone say nothing at this
corpus scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sessionrank.data import EngagementLabel
from sessionrank.featurize import (
    FeaturizedImpression,
    HEURISTIC_COLUMNS,
    INTENT_COLUMNS,
    assemble_examples,
)
from sessionrank.ltr import (
    RankerModel,
    RankerTrainParams,
    RankingExample,
    score_items,
    split_examples,
    train_ranker,
)

BASELINE = "MLR"

VARIANTS: dict[str, tuple[str, ...]] = {
    "MLR": (),
    "MLR+ncd_lc": ("ncd_lc",),
    "MLR+cossim_lc": ("cossim_lc",),
    "MLR+ncd_l5c": ("ncd_l5c",),
    "MLR+cossim_l5c": ("cossim_l5c",),
    "P1": HEURISTIC_COLUMNS,
    "P1+ncd_ref_txt": HEURISTIC_COLUMNS + ("ncd_ref_txt",),
    "P1+cossim_ref_emb": HEURISTIC_COLUMNS + ("cossim_ref_emb",),
    "P2": HEURISTIC_COLUMNS + INTENT_COLUMNS,
    "P2+cossim_seq_trans": HEURISTIC_COLUMNS + INTENT_COLUMNS + ("cossim_seq_trans",),
    "P2+cossim_seq_perc": HEURISTIC_COLUMNS + INTENT_COLUMNS + ("cossim_seq_perc",),
}

# Fixed report row order: (variant, baseline) pairs.
COMPARISONS: tuple[tuple[str, str], ...] = (
    ("MLR+ncd_lc", "MLR"),
    ("MLR+cossim_lc", "MLR"),
    ("MLR+ncd_l5c", "MLR"),
    ("MLR+cossim_l5c", "MLR"),
    ("P1+ncd_ref_txt", "P1"),
    ("P1+cossim_ref_emb", "P1"),
    ("P2+cossim_seq_trans", "P2"),
    ("P2+cossim_seq_perc", "P2"),
)


@dataclass(frozen=True)
class RankedImpression:
    """Items of one impression sorted by descending model score; score ties
    keep the original SERP order."""

    labels: tuple[int, ...]
    session_id: str = ""


def rank_impression(
    labels, scores, session_id: str = ""
) -> RankedImpression:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="stable")
    return RankedImpression(
        labels=tuple(int(labels[i]) for i in order), session_id=session_id
    )


def reciprocal_sale_rank(ranked: RankedImpression) -> float | None:
    """1/rank of the first sale item, or None when the impression has none."""
    for position, label in enumerate(ranked.labels, start=1):
        if label == int(EngagementLabel.SALE):
            return 1.0 / position
    return None


def mrr_sale(ranked: list[RankedImpression]) -> float:
    """Mean reciprocal rank of the first sale item over impressions that
    contain at least one sale. Raises when no impression has a sale."""
    if not ranked:
        raise ValueError("mrr_sale needs a non-empty list")
    rrs = [rr for rr in (reciprocal_sale_rank(r) for r in ranked) if rr is not None]
    if not rrs:
        raise ValueError("mrr_sale undefined: no impression contains a sale item")
    return float(np.mean(rrs))


def lift(variant_mrr: float, baseline_mrr: float) -> float:
    """(variant - baseline) / baseline * 100."""
    if baseline_mrr <= 0:
        raise ValueError("lift undefined for non-positive baseline MRR")
    return (variant_mrr - baseline_mrr) / baseline_mrr * 100.0


@dataclass(frozen=True)
class LiftRow:
    variant: str
    baseline: str
    baseline_mrr: float
    variant_mrr: float
    lift_pct: float
    se_pct: float
    n_impressions: int
    seed: int


@dataclass
class LiftReport:
    rows: list[LiftRow]
    meta: dict[str, str] = field(default_factory=dict)


def _sale_reciprocal_ranks(
    model: RankerModel, examples: list[RankingExample]
) -> np.ndarray:
    """Per-impression reciprocal sale ranks (NaN where the impression has no
    sale), aligned with ``examples`` order."""
    out = np.full(len(examples), np.nan)
    for i, ex in enumerate(examples):
        ranked = rank_impression(ex.labels, score_items(model, ex.features))
        rr = reciprocal_sale_rank(ranked)
        if rr is not None:
            out[i] = rr
    return out


def run_progression(
    featurized: list[FeaturizedImpression],
    params: RankerTrainParams,
    seed: int,
    ladder: tuple[str, ...] | None = None,
    meta: dict[str, str] | None = None,
) -> LiftReport:
    """Train the variant ladder on identical splits/seeds and report lifts.

    ``ladder`` restricts the trained variants (default: every variant every
    comparison needs). Rows appear in the fixed COMPARISONS order, skipping
    comparisons whose variants were not requested.
    """
    wanted = tuple(VARIANTS) if ladder is None else tuple(ladder)
    unknown = [v for v in wanted if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown ladder variants: {unknown}")

    models = train_ladder(featurized, params, seed, wanted)
    return evaluate_models(featurized, models, seed, meta)


def train_ladder(
    featurized: list[FeaturizedImpression],
    params: RankerTrainParams,
    seed: int,
    variants: tuple[str, ...],
) -> dict[str, RankerModel]:
    """Train the requested variants; per-variant seeds derive from ``seed``
    and the variant name, so runs reproduce exactly."""
    models: dict[str, RankerModel] = {}
    for variant in variants:
        columns = VARIANTS[variant]
        examples = assemble_examples(featurized, columns)
        run_params = RankerTrainParams(
            scorer=params.scorer,
            hidden_width=params.hidden_width,
            steps=params.steps,
            learning_rate=params.learning_rate,
            batch_size=params.batch_size,
            clip_norm=params.clip_norm,
            train_fraction=params.train_fraction,
            seed=seed,
        )
        models[variant] = train_ranker(variant, columns, examples, run_params)
    return models


def evaluate_models(
    featurized: list[FeaturizedImpression],
    models: dict[str, RankerModel],
    seed: int,
    meta: dict[str, str] | None = None,
) -> LiftReport:
    """Score the held-out split with every model and assemble the lift rows."""
    rows = []
    rr_cache: dict[str, np.ndarray] = {}
    mrr_cache: dict[str, float] = {}

    def eval_variant(name: str) -> tuple[np.ndarray, float]:
        if name not in rr_cache:
            model = models[name]
            _, val = split_examples(assemble_examples(featurized, model.feature_columns))
            if not val:
                raise ValueError("evaluation split is empty")
            rrs = _sale_reciprocal_ranks(model, val)
            rr_cache[name] = rrs
            with_sale = rrs[~np.isnan(rrs)]
            if len(with_sale) == 0:
                raise ValueError("mrr_sale undefined: no evaluation impression has a sale")
            mrr_cache[name] = float(with_sale.mean())
        return rr_cache[name], mrr_cache[name]

    for variant, baseline in COMPARISONS:
        if variant not in models or baseline not in models:
            continue
        rr_v, mrr_v = eval_variant(variant)
        rr_b, mrr_b = eval_variant(baseline)
        valid = ~np.isnan(rr_b)  # sale presence is a label property: same mask
        diffs = rr_v[valid] - rr_b[valid]
        n = len(diffs)
        se_mean = float(diffs.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        rows.append(
            LiftRow(
                variant=variant,
                baseline=baseline,
                baseline_mrr=mrr_b,
                variant_mrr=mrr_v,
                lift_pct=lift(mrr_v, mrr_b),
                se_pct=se_mean / mrr_b * 100.0,
                n_impressions=n,
                seed=seed,
            )
        )
    return LiftReport(rows=rows, meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# Report files

_TSV_HEADER = (
    "variant\tbaseline\tbaseline_mrr\tvariant_mrr\tlift_pct\tse_pct\tn_impressions\tseed"
)


def report_to_tsv(report: LiftReport) -> str:
    lines = ["# sessionrank lift report v1"]
    lines.append("# synthetic corpus: lifts are directional only, not production-comparable")
    for key, value in report.meta.items():
        lines.append(f"# {key}={value}")
    lines.append(_TSV_HEADER)
    for r in report.rows:
        lines.append(
            f"{r.variant}\t{r.baseline}\t{r.baseline_mrr:.8f}\t{r.variant_mrr:.8f}"
            f"\t{r.lift_pct:.5f}\t{r.se_pct:.5f}\t{r.n_impressions}\t{r.seed}"
        )
    return "\n".join(lines) + "\n"


def report_from_tsv(text: str) -> LiftReport:
    meta: dict[str, str] = {}
    rows = []
    for line in text.splitlines():
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key] = value
            continue
        if line == _TSV_HEADER:
            continue
        fields = line.split("\t")
        rows.append(
            LiftRow(
                variant=fields[0],
                baseline=fields[1],
                baseline_mrr=float(fields[2]),
                variant_mrr=float(fields[3]),
                lift_pct=float(fields[4]),
                se_pct=float(fields[5]),
                n_impressions=int(fields[6]),
                seed=int(fields[7]),
            )
        )
    return LiftReport(rows=rows, meta=meta)


def render_report(report: LiftReport) -> str:
    """Human-readable fixed-width table of the same rows as the TSV."""
    lines = ["MRR sale lift (synthetic corpus; directional only)"]
    for key, value in report.meta.items():
        lines.append(f"  {key} = {value}")
    lines.append("")
    header = f"{'variant':<22} {'baseline':<6} {'base MRR':>10} {'var MRR':>10} {'lift %':>9} {'se %':>8} {'n':>6}"
    lines.append(header)
    lines.append("-" * len(header))
    for r in report.rows:
        lines.append(
            f"{r.variant:<22} {r.baseline:<6} {r.baseline_mrr:>10.6f} {r.variant_mrr:>10.6f}"
            f" {r.lift_pct:>+9.3f} {r.se_pct:>8.3f} {r.n_impressions:>6}"
        )
    return "\n".join(lines) + "\n"
