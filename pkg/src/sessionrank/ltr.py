"""Trainable ranker and the lambdaRank machinery shared with encoder training.

Scoring models are deliberately small: a linear scorer or a one-hidden-layer
GELU scorer over a frozen feature layout (base features plus declared
context-feature value:flag pairs). Training is plain SGD on lambdaRank
gradients with gradient-norm clipping, fully deterministic under a seed.

Graded gains are 2^label - 1 (labels 0/1/2 -> gains 0/1/3), so sales
outweigh clicks which outweigh unengaged items. NDCG inside the lambda
weights is untruncated; lists are at most 100 items here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sessionrank._kernels import lambda_core
from sessionrank.data import BASE_FEATURE_DIM
from sessionrank.hashing import derive_seed, stable_fraction
from sessionrank.layers import gelu, gelu_grad

SIGMA = 1.0

LINEAR = "linear"
HIDDEN = "hidden"


class LayoutError(ValueError):
    """Feature layout of the data does not match what a model declares."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss; carries the failing step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class RankingExample:
    """One impression, featurized: rows of ``features`` follow SERP order."""

    session_id: str
    features: np.ndarray  # (n_items, n_features) float64
    labels: np.ndarray  # (n_items,) int64


def label_gains(labels: np.ndarray) -> np.ndarray:
    return np.power(2.0, labels.astype(np.float64)) - 1.0


def rank_positions(scores: np.ndarray) -> np.ndarray:
    """1-based ranks under descending score; ties keep original order."""
    order = np.argsort(-scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.int64)
    ranks[order] = np.arange(1, len(scores) + 1)
    return ranks


def ndcg(scores: np.ndarray, labels: np.ndarray, k: int | None = None) -> float:
    """NDCG@k (full list when k is None) with gains 2^label - 1."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    gains = label_gains(labels)
    ideal = np.sort(gains)[::-1]
    positions = np.arange(1, len(gains) + 1)
    cut = len(gains) if k is None else min(k, len(gains))
    ideal_dcg = float(np.sum(ideal[:cut] / np.log2(positions[:cut] + 1)))
    if ideal_dcg == 0.0:
        return 0.0
    ranks = rank_positions(scores)
    in_cut = ranks <= cut
    dcg = float(np.sum(gains[in_cut] / np.log2(ranks[in_cut] + 1)))
    return dcg / ideal_dcg


def lambda_gradients(scores, labels) -> tuple[np.ndarray, float]:
    """Per-item lambdaRank gradients and the pairwise loss for one impression.

    Returns (lambdas, loss); lambdas sum to zero by pairwise antisymmetry.
    All-equal labels give a zero gradient set, not an error.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    if len(scores) < 2:
        raise ValueError("lambda gradients need at least 2 items")
    gains = label_gains(labels)
    ideal = np.sort(gains)[::-1]
    max_dcg = float(np.sum(ideal / np.log2(np.arange(2, len(gains) + 2))))
    if max_dcg == 0.0:
        return np.zeros(len(scores)), 0.0
    discounts = 1.0 / np.log2(rank_positions(scores) + 1.0)
    return lambda_core(scores, gains, np.ascontiguousarray(discounts), 1.0 / max_dcg, SIGMA)


@dataclass
class RankerModel:
    variant: str
    feature_columns: tuple[str, ...]  # context features; base features implicit
    scorer: str
    weights: dict[str, np.ndarray]
    seed: int
    steps: int
    loss_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_inputs(self) -> int:
        return BASE_FEATURE_DIM + 2 * len(self.feature_columns)


def init_ranker(
    variant: str,
    feature_columns: tuple[str, ...],
    scorer: str = LINEAR,
    hidden_width: int = 32,
    seed: int = 0,
) -> RankerModel:
    n_inputs = BASE_FEATURE_DIM + 2 * len(feature_columns)
    rng = np.random.default_rng(derive_seed(seed, f"ranker-init:{variant}"))
    if scorer == LINEAR:
        weights = {"w": rng.normal(0.0, 0.1, n_inputs), "b": np.zeros(1)}
    elif scorer == HIDDEN:
        weights = {
            "w1": rng.normal(0.0, 1.0 / np.sqrt(n_inputs), (hidden_width, n_inputs)),
            "b1": np.zeros(hidden_width),
            "w2": rng.normal(0.0, 1.0 / np.sqrt(hidden_width), hidden_width),
            "b2": np.zeros(1),
        }
    else:
        raise ValueError(f"unknown scorer {scorer!r}")
    return RankerModel(
        variant=variant,
        feature_columns=tuple(feature_columns),
        scorer=scorer,
        weights=weights,
        seed=seed,
        steps=0,
    )


def _check_layout(model: RankerModel, n_features: int) -> None:
    if n_features != model.n_inputs:
        raise LayoutError(
            f"model {model.variant!r} expects {model.n_inputs} inputs "
            f"(base[{BASE_FEATURE_DIM}] + value:flag for {list(model.feature_columns)}), "
            f"got {n_features}"
        )


def score_items(model: RankerModel, features: np.ndarray) -> np.ndarray:
    """Score every row of ``features`` (n_items, n_features); higher is better."""
    features = np.asarray(features, dtype=np.float64)
    _check_layout(model, features.shape[1])
    w = model.weights
    if model.scorer == LINEAR:
        return features @ w["w"] + w["b"][0]
    z = features @ w["w1"].T + w["b1"]
    return gelu(z) @ w["w2"] + w["b2"][0]


def score(model: RankerModel, feature_vector: np.ndarray) -> float:
    return float(score_items(model, np.asarray(feature_vector)[None, :])[0])


def _score_gradients(
    model: RankerModel, features: np.ndarray, lambdas: np.ndarray
) -> dict[str, np.ndarray]:
    """d(loss)/d(weights) given per-item d(loss)/d(score) = lambdas."""
    w = model.weights
    if model.scorer == LINEAR:
        return {"w": features.T @ lambdas, "b": np.array([lambdas.sum()])}
    z = features @ w["w1"].T + w["b1"]
    a = gelu(z)
    dz = (lambdas[:, None] * w["w2"][None, :]) * gelu_grad(z)
    return {
        "w1": dz.T @ features,
        "b1": dz.sum(axis=0),
        "w2": a.T @ lambdas,
        "b2": np.array([lambdas.sum()]),
    }


def split_examples(
    examples: list[RankingExample], fraction: float = 0.8, salt: str = "ranker-split"
) -> tuple[list[RankingExample], list[RankingExample]]:
    """Deterministic train/validation split by session-id hash."""
    train = [ex for ex in examples if stable_fraction(ex.session_id, salt) < fraction]
    val = [ex for ex in examples if stable_fraction(ex.session_id, salt) >= fraction]
    return train, val


@dataclass
class RankerTrainParams:
    scorer: str = LINEAR
    hidden_width: int = 32
    steps: int = 2000
    learning_rate: float = 0.1
    batch_size: int = 8
    clip_norm: float = 1.0
    train_fraction: float = 0.8
    seed: int = 0


def _clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if clip_norm > 0 and total > clip_norm:
        scale = clip_norm / total
        for g in grads.values():
            g *= scale


def train_ranker(
    variant: str,
    feature_columns: tuple[str, ...],
    examples: list[RankingExample],
    params: RankerTrainParams,
) -> RankerModel:
    """Train one variant by SGD on lambdaRank gradients.

    Splits ``examples`` 80/20 by session-id hash and trains on the 80% side;
    callers evaluate on the 20% side recovered through ``split_examples``.
    Impressions whose labels are all equal contribute no gradient and are
    skipped up front.
    """
    if not examples:
        raise ValueError("no training examples")
    train, _ = split_examples(examples, params.train_fraction)
    pool = [ex for ex in train if ex.labels.min() != ex.labels.max()]
    if not pool:
        raise ValueError(f"variant {variant!r}: no impression with label variation")
    for ex in pool:
        if ex.features.shape[1] != BASE_FEATURE_DIM + 2 * len(feature_columns):
            raise LayoutError(
                f"variant {variant!r}: example has {ex.features.shape[1]} inputs, "
                f"expected base[{BASE_FEATURE_DIM}] + value:flag for {list(feature_columns)}"
            )

    model = init_ranker(
        variant, feature_columns, params.scorer, params.hidden_width, params.seed
    )
    rng = np.random.default_rng(derive_seed(params.seed, f"ranker-order:{variant}"))
    order = np.arange(len(pool))
    cursor = len(pool)  # force a shuffle before the first step
    trace = np.empty(params.steps)

    for step in range(params.steps):
        grads: dict[str, np.ndarray] = {
            k: np.zeros_like(v) for k, v in model.weights.items()
        }
        batch_loss = 0.0
        for _ in range(params.batch_size):
            if cursor >= len(pool):
                rng.shuffle(order)
                cursor = 0
            ex = pool[order[cursor]]
            cursor += 1
            scores = score_items(model, ex.features)
            lambdas, loss = lambda_gradients(scores, ex.labels)
            batch_loss += loss
            for key, g in _score_gradients(model, ex.features, lambdas).items():
                grads[key] += g
        if not np.isfinite(batch_loss):
            raise TrainingError(step, f"non-finite loss in variant {variant!r}")
        for g in grads.values():
            g /= params.batch_size
        _clip_gradients(grads, params.clip_norm)
        for key in model.weights:
            model.weights[key] -= params.learning_rate * grads[key]
        trace[step] = batch_loss / params.batch_size

    model.steps = params.steps
    model.loss_trace = trace
    return model


def mean_ndcg(model: RankerModel, examples: list[RankingExample], k: int | None = 10) -> float:
    values = [ndcg(score_items(model, ex.features), ex.labels, k) for ex in examples]
    if not values:
        raise ValueError("no examples to evaluate")
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Model file round-trip: header lines then one flat array per parameter.

def save_ranker_model(model: RankerModel, path: str, extra: dict[str, str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# sessionrank ranker model v1\n")
        fh.write(f"variant={model.variant}\n")
        fh.write(f"scorer={model.scorer}\n")
        fh.write(f"columns={','.join(model.feature_columns)}\n")
        fh.write(f"seed={model.seed}\n")
        fh.write(f"steps={model.steps}\n")
        for key, value in (extra or {}).items():
            fh.write(f"{key}={value}\n")
        for name, arr in model.weights.items():
            shape = ",".join(str(s) for s in arr.shape)
            fh.write(f"param {name} {shape}\n")
            fh.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")


def load_ranker_model(path: str) -> tuple[RankerModel, dict[str, str]]:
    header: dict[str, str] = {}
    weights: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("#") or not line:
            i += 1
            continue
        if line.startswith("param "):
            _, name, shape_s = line.split(" ")
            shape = tuple(int(s) for s in shape_s.split(","))
            values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
            weights[name] = values.reshape(shape)
            i += 2
            continue
        key, _, value = line.partition("=")
        header[key] = value
        i += 1
    columns = tuple(c for c in header.get("columns", "").split(",") if c)
    model = RankerModel(
        variant=header["variant"],
        feature_columns=columns,
        scorer=header["scorer"],
        weights=weights,
        seed=int(header["seed"]),
        steps=int(header.get("steps", "0")),
    )
    meta = {
        k: v
        for k, v in header.items()
        if k not in ("variant", "scorer", "columns", "seed", "steps")
    }
    return model, meta
