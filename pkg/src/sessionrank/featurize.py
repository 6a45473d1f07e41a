"""Assemble per-item feature records from impressions.

Context features are value:flag encoded - a missing feature (empty context,
or no reference click) becomes value 0.0 with flag 0.0, so the ranker learns
its own default instead of being fed a hard-coded neutral constant.

Canonical context-feature column order (documented, fixed):

    ncd_lc cossim_lc ncd_l5c cossim_l5c ncd_ref_txt cossim_ref_emb
    cossim_seq_trans cossim_seq_perc

The record file is tab-separated, one line per item: session_id, impression
ordinal, label, comma-joined base features, then one value:flag pair per
context column listed in the file header. Lines of one impression are
consecutive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sessionrank.data import SerpImpression, Session
from sessionrank.heuristic import heuristic_features
from sessionrank.intent import (
    intent_embedding_feature,
    intent_textual_feature,
    select_reference_embedding,
    select_reference_textual,
)
from sessionrank.ltr import LayoutError, RankingExample
from sessionrank.seqmodels import (
    PERCEIVER,
    TRANSFORMER,
    EncoderWeights,
    perceiver_encode,
    seq_context_feature,
    transformer_encode,
)

HEURISTIC_COLUMNS = ("ncd_lc", "cossim_lc", "ncd_l5c", "cossim_l5c")
INTENT_COLUMNS = ("ncd_ref_txt", "cossim_ref_emb")
SEQ_COLUMNS = ("cossim_seq_trans", "cossim_seq_perc")
ALL_CONTEXT_COLUMNS = HEURISTIC_COLUMNS + INTENT_COLUMNS + SEQ_COLUMNS


@dataclass(frozen=True)
class FeaturizedImpression:
    session_id: str
    ordinal: int
    labels: np.ndarray  # (n,) int64
    base: np.ndarray  # (n, BASE_FEATURE_DIM)
    columns: tuple[str, ...]  # context columns present
    values: np.ndarray  # (n, len(columns))
    flags: np.ndarray  # (n, len(columns)) 1.0 = present


def featurize_impression(
    impression: SerpImpression,
    embedder,
    encoders: dict[str, EncoderWeights] | None = None,
) -> FeaturizedImpression:
    """Compute all context features for one impression.

    ``encoders`` maps "trans"/"perc" to trained weights; when given, the two
    sequence-similarity columns are included.
    """
    context = impression.context
    ctx_embs = (
        np.stack([embedder.embed(c.item.title) for c in context.clicks])
        if context
        else None
    )
    query_emb = embedder.embed(impression.query.text)
    ref_txt = select_reference_textual(impression.query.text, context)
    ref_emb = select_reference_embedding(query_emb, ctx_embs)

    seq_vecs: dict[str, object] = {}
    if encoders is not None:
        for mode in (TRANSFORMER, PERCEIVER):
            if mode not in encoders:
                raise ValueError(f"missing encoder weights for mode {mode!r}")
            if ctx_embs is None:
                seq_vecs[mode] = None
            elif mode == TRANSFORMER:
                seq_vecs[mode] = transformer_encode(encoders[mode], ctx_embs)
            else:
                seq_vecs[mode] = perceiver_encode(encoders[mode], query_emb, ctx_embs)

    columns = HEURISTIC_COLUMNS + INTENT_COLUMNS + (SEQ_COLUMNS if encoders is not None else ())
    n = len(impression.items)
    values = np.zeros((n, len(columns)))
    flags = np.zeros((n, len(columns)))
    base = np.empty((n, len(impression.items[0].base_features)))
    labels = np.empty(n, dtype=np.int64)

    for i, serp_item in enumerate(impression.items):
        title = serp_item.item.title
        item_emb = embedder.embed(title)
        feats = heuristic_features(title, item_emb, context, ctx_embs)
        row: dict[str, float | None] = {
            "ncd_lc": feats.ncd_lc,
            "cossim_lc": feats.cossim_lc,
            "ncd_l5c": feats.ncd_l5c,
            "cossim_l5c": feats.cossim_l5c,
            "ncd_ref_txt": intent_textual_feature(title, ref_txt, context),
            "cossim_ref_emb": intent_embedding_feature(item_emb, ref_emb, ctx_embs),
        }
        if encoders is not None:
            row["cossim_seq_trans"] = seq_context_feature(item_emb, seq_vecs[TRANSFORMER])
            row["cossim_seq_perc"] = seq_context_feature(item_emb, seq_vecs[PERCEIVER])
        for j, col in enumerate(columns):
            value = row[col]
            if value is not None:
                values[i, j] = value
                flags[i, j] = 1.0
        base[i] = serp_item.base_features
        labels[i] = int(serp_item.label)

    return FeaturizedImpression(
        session_id=impression.session_id,
        ordinal=impression.ordinal,
        labels=labels,
        base=base,
        columns=columns,
        values=values,
        flags=flags,
    )


def featurize_sessions(
    sessions: list[Session],
    embedder,
    encoders: dict[str, EncoderWeights] | None = None,
) -> list[FeaturizedImpression]:
    return [
        featurize_impression(impr, embedder, encoders)
        for session in sessions
        for impr in session.impressions()
    ]


def assemble_examples(
    featurized: list[FeaturizedImpression], feature_columns: tuple[str, ...]
) -> list[RankingExample]:
    """Build ranker inputs [base | value:flag per declared column].

    Raises LayoutError naming any declared column the data does not carry.
    """
    examples = []
    for fi in featurized:
        missing = [c for c in feature_columns if c not in fi.columns]
        if missing:
            raise LayoutError(
                f"featurized data lacks column(s) {missing}; available: {list(fi.columns)}"
            )
        parts = [fi.base]
        for col in feature_columns:
            j = fi.columns.index(col)
            parts.append(fi.values[:, j : j + 1])
            parts.append(fi.flags[:, j : j + 1])
        examples.append(
            RankingExample(
                session_id=fi.session_id,
                features=np.hstack(parts),
                labels=fi.labels,
            )
        )
    return examples


# ---------------------------------------------------------------------------
# Record file round-trip

def write_features(
    featurized: list[FeaturizedImpression], path: str, meta: dict[str, str] | None = None
) -> None:
    columns = featurized[0].columns if featurized else ALL_CONTEXT_COLUMNS
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# sessionrank features v1\n")
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("# context_columns: " + " ".join(columns) + "\n")
        for fi in featurized:
            if fi.columns != columns:
                raise ValueError("inconsistent context columns across impressions")
            for i in range(len(fi.labels)):
                fields = [
                    fi.session_id,
                    str(fi.ordinal),
                    str(int(fi.labels[i])),
                    ",".join(repr(float(v)) for v in fi.base[i]),
                ]
                fields.extend(
                    f"{float(fi.values[i, j])!r}:{int(fi.flags[i, j])}"
                    for j in range(len(columns))
                )
                fh.write("\t".join(fields) + "\n")


def read_features(path: str) -> tuple[list[FeaturizedImpression], dict[str, str]]:
    meta: dict[str, str] = {}
    columns: tuple[str, ...] | None = None
    groups: list[tuple[str, int, list]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("context_columns:"):
                    columns = tuple(body.split(":", 1)[1].split())
                elif "=" in body:
                    key, _, value = body.partition("=")
                    meta[key] = value
                continue
            if columns is None:
                raise ValueError("features file lacks the context_columns header")
            fields = line.split("\t")
            sid, ordinal = fields[0], int(fields[1])
            label = int(fields[2])
            base = [float(v) for v in fields[3].split(",")]
            pairs = []
            for token in fields[4:]:
                value_s, _, flag_s = token.rpartition(":")
                pairs.append((float(value_s), float(int(flag_s))))
            if len(pairs) != len(columns):
                raise ValueError(
                    f"row has {len(pairs)} value:flag pairs, expected {len(columns)}"
                )
            if not groups or groups[-1][0] != sid or groups[-1][1] != ordinal:
                groups.append((sid, ordinal, []))
            groups[-1][2].append((label, base, pairs))

    featurized = []
    for sid, ordinal, rows in groups:
        labels = np.array([r[0] for r in rows], dtype=np.int64)
        base = np.array([r[1] for r in rows])
        values = np.array([[p[0] for p in r[2]] for r in rows])
        flags = np.array([[p[1] for p in r[2]] for r in rows])
        featurized.append(
            FeaturizedImpression(
                session_id=sid,
                ordinal=ordinal,
                labels=labels,
                base=base,
                columns=columns,
                values=values,
                flags=flags,
            )
        )
    return featurized, meta
