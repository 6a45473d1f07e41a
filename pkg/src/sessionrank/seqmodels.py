"""Attention encoders over the click context, trained with lambdaRank.

Two encoder modes compress the (up to 5) most recent click embeddings into
one context vector:

* ``trans`` - learned recency-slot position vectors are added to the click
  embeddings (slot 0 = most recent), one post-norm encoder layer runs
  (multi-head self-attention, residual + layer norm, GELU feed-forward with
  hidden width 2*dim, residual + layer norm), and the positions are
  mean-pooled into the output.
* ``perc``  - a query-conditioned two-stage encoder. Stage one scores each
  click by the cosine between projected query and projected click, softmaxes
  the scores at a fixed temperature, and reweights the value-projected click
  sequence (length preserved). Stage two is the same position-add /
  self-attention layer / mean-pool pipeline as ``trans``. There is no latent
  array; the query itself gets no positional slot.

Training scores each impression item by cosine against the encoder output,
takes lambdaRank gradients on those scores, and backpropagates through the
cosine and the encoder. Plain SGD, gradient-norm clipping, pinned seeds.
Encoders must be fit on the pre-boundary epoch split so their training data
never overlaps the ranker's (the weight files carry the trained epoch range
for exactly this check).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sessionrank.data import CONTEXT_WINDOW, Session
from sessionrank.embed import HashEmbedder
from sessionrank.hashing import derive_seed
from sessionrank.layers import (
    cosine_scores_backward_vec,
    cosine_scores_forward,
    ff_backward,
    ff_forward,
    layer_norm_backward,
    layer_norm_forward,
    mha_backward,
    mha_forward,
    softmax,
    softmax_backward,
)
from sessionrank.ltr import TrainingError, lambda_gradients

TRANSFORMER = "trans"
PERCEIVER = "perc"
LAYERS = 1
FF_MULT = 2
TEMPERATURE = 0.1  # softmax temperature for cosine-scored cross-attention

_BASE_FIELDS = (
    "pos", "wq", "wk", "wv", "wo",
    "ff_w1", "ff_b1", "ff_w2", "ff_b2",
    "ln1_g", "ln1_b", "ln2_g", "ln2_b",
)
_CROSS_FIELDS = ("cq", "ck", "cv")


@dataclass
class EncoderWeights:
    mode: str
    dim: int
    heads: int
    seed: int
    pos: np.ndarray  # (CONTEXT_WINDOW, dim) learned recency-slot vectors
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ff_w1: np.ndarray
    ff_b1: np.ndarray
    ff_w2: np.ndarray
    ff_b2: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    cq: np.ndarray | None = None  # cross-attention projections (perc only)
    ck: np.ndarray | None = None
    cv: np.ndarray | None = None

    def param_fields(self) -> tuple[str, ...]:
        return _BASE_FIELDS + (_CROSS_FIELDS if self.mode == PERCEIVER else ())

    def copy(self) -> "EncoderWeights":
        kwargs = {f: getattr(self, f).copy() for f in self.param_fields()}
        if self.mode != PERCEIVER:
            kwargs.update(cq=None, ck=None, cv=None)
        return EncoderWeights(
            mode=self.mode, dim=self.dim, heads=self.heads, seed=self.seed, **kwargs
        )


@dataclass(frozen=True)
class SeqEmbedding:
    vector: np.ndarray
    source: str  # "trans" | "perc"


def init_encoder_weights(
    mode: str, dim: int, heads: int = 4, seed: int = 0
) -> EncoderWeights:
    if mode not in (TRANSFORMER, PERCEIVER):
        raise ValueError(f"unknown encoder mode {mode!r}")
    if dim % heads != 0:
        raise ValueError(f"dim {dim} not divisible by {heads} heads")
    rng = np.random.default_rng(derive_seed(seed, f"encoder-init:{mode}"))
    scale = 1.0 / np.sqrt(dim)
    hidden = FF_MULT * dim

    def proj():
        return rng.normal(0.0, scale, (dim, dim))

    weights = EncoderWeights(
        mode=mode,
        dim=dim,
        heads=heads,
        seed=seed,
        pos=rng.normal(0.0, 0.1, (CONTEXT_WINDOW, dim)),
        wq=proj(),
        wk=proj(),
        wv=proj(),
        wo=proj(),
        ff_w1=rng.normal(0.0, scale, (dim, hidden)),
        ff_b1=np.zeros(hidden),
        ff_w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, dim)),
        ff_b2=np.zeros(dim),
        ln1_g=np.ones(dim),
        ln1_b=np.zeros(dim),
        ln2_g=np.ones(dim),
        ln2_b=np.zeros(dim),
    )
    if mode == PERCEIVER:
        weights.cq = proj()
        weights.ck = proj()
        weights.cv = proj()
    return weights


def zero_gradients(weights: EncoderWeights) -> dict[str, np.ndarray]:
    return {f: np.zeros_like(getattr(weights, f)) for f in weights.param_fields()}


def flatten_weights(weights: EncoderWeights) -> np.ndarray:
    return np.concatenate([getattr(weights, f).ravel() for f in weights.param_fields()])


def set_flat_weights(weights: EncoderWeights, flat: np.ndarray) -> None:
    offset = 0
    for f in weights.param_fields():
        arr = getattr(weights, f)
        arr[...] = flat[offset : offset + arr.size].reshape(arr.shape)
        offset += arr.size


def _layer_forward(x: np.ndarray, w: EncoderWeights) -> tuple[np.ndarray, dict]:
    attn_out, c_mha = mha_forward(x, w.wq, w.wk, w.wv, w.wo, w.heads)
    h1, c_ln1 = layer_norm_forward(x + attn_out, w.ln1_g, w.ln1_b)
    ff_out, c_ff = ff_forward(h1, w.ff_w1, w.ff_b1, w.ff_w2, w.ff_b2)
    h2, c_ln2 = layer_norm_forward(h1 + ff_out, w.ln2_g, w.ln2_b)
    return h2, {"mha": c_mha, "ln1": c_ln1, "ff": c_ff, "ln2": c_ln2}


def _layer_backward(
    dh2: np.ndarray, cache: dict, grads: dict[str, np.ndarray]
) -> np.ndarray:
    dsum2, dg2, db2 = layer_norm_backward(dh2, cache["ln2"])
    grads["ln2_g"] += dg2
    grads["ln2_b"] += db2
    dh1 = dsum2.copy()
    dx_ff, dw1, db1, dw2, db2f = ff_backward(dsum2, cache["ff"])
    grads["ff_w1"] += dw1
    grads["ff_b1"] += db1
    grads["ff_w2"] += dw2
    grads["ff_b2"] += db2f
    dh1 += dx_ff
    dsum1, dg1, db1l = layer_norm_backward(dh1, cache["ln1"])
    grads["ln1_g"] += dg1
    grads["ln1_b"] += db1l
    dx = dsum1.copy()
    dx_mha, dwq, dwk, dwv, dwo = mha_backward(dsum1, cache["mha"])
    grads["wq"] += dwq
    grads["wk"] += dwk
    grads["wv"] += dwv
    grads["wo"] += dwo
    dx += dx_mha
    return dx


def _check_context(weights: EncoderWeights, context_embeddings: np.ndarray) -> np.ndarray:
    ctx = np.asarray(context_embeddings, dtype=np.float64)
    if ctx.ndim != 2 or ctx.shape[0] == 0:
        raise ValueError("encoder needs a non-empty (m, dim) context matrix")
    if ctx.shape[0] > CONTEXT_WINDOW:
        raise ValueError(f"context longer than {CONTEXT_WINDOW} clicks")
    if ctx.shape[1] != weights.dim:
        raise ValueError(f"context dim {ctx.shape[1]} != encoder dim {weights.dim}")
    return ctx


def transformer_forward(
    weights: EncoderWeights, context_embeddings: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Returns (unified embedding, cache). Rows are most-recent-first; the
    learned position vector of slot i attaches to the i-th most recent click."""
    ctx = _check_context(weights, context_embeddings)
    m = ctx.shape[0]
    x = ctx + weights.pos[:m]
    h, layer_cache = _layer_forward(x, weights)
    return h.mean(axis=0), {"layer": layer_cache, "m": m}


def transformer_backward(
    dout: np.ndarray, cache: dict, weights: EncoderWeights, grads: dict[str, np.ndarray]
) -> None:
    m = cache["m"]
    dh = np.broadcast_to(dout / m, (m, dout.shape[0])).copy()
    dx = _layer_backward(dh, cache["layer"], grads)
    grads["pos"][:m] += dx


def perceiver_forward(
    weights: EncoderWeights, query_emb: np.ndarray, context_embeddings: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Two-stage encoder: cosine-scored cross-attention reweights the
    value-projected click sequence, then the shared self-attention layer runs."""
    if weights.mode != PERCEIVER:
        raise ValueError("perceiver_forward needs perc-mode weights")
    ctx = _check_context(weights, context_embeddings)
    query = np.asarray(query_emb, dtype=np.float64)
    m = ctx.shape[0]

    q_proj = query @ weights.cq  # (d,)
    k_proj = ctx @ weights.ck  # (m, d)
    v_proj = ctx @ weights.cv
    q_norm = float(np.linalg.norm(q_proj))
    k_norms = np.linalg.norm(k_proj, axis=1)
    cos = (k_proj @ q_proj) / (q_norm * k_norms)
    cross_weights = softmax(cos / TEMPERATURE)
    weighted = cross_weights[:, None] * v_proj  # the reweighted sequence

    x = weighted + weights.pos[:m]
    h, layer_cache = _layer_forward(x, weights)
    cache = {
        "layer": layer_cache, "m": m, "query": query, "ctx": ctx,
        "q_proj": q_proj, "k_proj": k_proj, "v_proj": v_proj,
        "q_norm": q_norm, "k_norms": k_norms, "cos": cos,
        "cross_weights": cross_weights,
    }
    return h.mean(axis=0), cache


def perceiver_backward(
    dout: np.ndarray, cache: dict, weights: EncoderWeights, grads: dict[str, np.ndarray]
) -> None:
    m = cache["m"]
    dh = np.broadcast_to(dout / m, (m, dout.shape[0])).copy()
    dx = _layer_backward(dh, cache["layer"], grads)
    grads["pos"][:m] += dx

    v_proj, cross_weights = cache["v_proj"], cache["cross_weights"]
    dweighted = dx
    dcross = np.sum(dweighted * v_proj, axis=1)
    dv_proj = cross_weights[:, None] * dweighted
    dcos = softmax_backward(dcross, cross_weights) / TEMPERATURE

    q_proj, k_proj = cache["q_proj"], cache["k_proj"]
    q_norm, k_norms, cos = cache["q_norm"], cache["k_norms"], cache["cos"]
    dq_proj = (k_proj / k_norms[:, None]).T @ dcos / q_norm - float(
        dcos @ cos
    ) * q_proj / (q_norm * q_norm)
    dk_proj = dcos[:, None] * (
        q_proj[None, :] / (q_norm * k_norms[:, None])
        - cos[:, None] * k_proj / (k_norms * k_norms)[:, None]
    )
    grads["cq"] += np.outer(cache["query"], dq_proj)
    grads["ck"] += cache["ctx"].T @ dk_proj
    grads["cv"] += cache["ctx"].T @ dv_proj


def transformer_encode(
    weights: EncoderWeights, context_embeddings: np.ndarray
) -> SeqEmbedding:
    vec, _ = transformer_forward(weights, context_embeddings)
    return SeqEmbedding(vector=vec, source=TRANSFORMER)


def perceiver_encode(
    weights: EncoderWeights, query_emb: np.ndarray, context_embeddings: np.ndarray
) -> SeqEmbedding:
    vec, _ = perceiver_forward(weights, query_emb, context_embeddings)
    return SeqEmbedding(vector=vec, source=PERCEIVER)


def seq_context_feature(item_emb: np.ndarray, seq_emb: SeqEmbedding | None) -> float | None:
    """Cosine between one item embedding and the encoder output; None when
    there was no context to encode."""
    if seq_emb is None:
        return None
    scores, _ = cosine_scores_forward(np.asarray(item_emb)[None, :], seq_emb.vector)
    return float(np.clip(scores[0], -1.0, 1.0))


# ---------------------------------------------------------------------------
# Training

@dataclass
class EncoderTrainParams:
    dim: int = 64
    heads: int = 4
    steps: int = 300
    learning_rate: float = 0.05
    clip_norm: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class EncoderExample:
    context: np.ndarray  # (m, dim) most-recent-first click embeddings
    items: np.ndarray  # (n, dim) SERP item embeddings
    query: np.ndarray  # (dim,)
    labels: np.ndarray  # (n,)


def collect_encoder_examples(
    sessions: list[Session], embedder: HashEmbedder
) -> list[EncoderExample]:
    """Impressions usable for encoder training: non-empty context and at
    least one ordered label pair."""
    examples = []
    for session in sessions:
        for impr in session.impressions():
            if not impr.context:
                continue
            labels = np.array(impr.labels(), dtype=np.int64)
            if labels.min() == labels.max():
                continue
            examples.append(
                EncoderExample(
                    context=np.stack(
                        [embedder.embed(c.item.title) for c in impr.context.clicks]
                    ),
                    items=np.stack([embedder.embed(si.item.title) for si in impr.items]),
                    query=embedder.embed(impr.query.text),
                    labels=labels,
                )
            )
    return examples


def encode_example(
    weights: EncoderWeights, example: EncoderExample
) -> tuple[np.ndarray, dict]:
    if weights.mode == TRANSFORMER:
        return transformer_forward(weights, example.context)
    return perceiver_forward(weights, example.query, example.context)


def train_sequence_encoder(
    mode: str,
    encoder_train_sessions: list[Session],
    params: EncoderTrainParams,
) -> tuple[EncoderWeights, np.ndarray]:
    """SGD over lambdaRank gradients of cosine scores; returns weights and
    the per-step loss trace. Deterministic under params.seed."""
    embedder = HashEmbedder(params.dim)
    examples = collect_encoder_examples(encoder_train_sessions, embedder)
    if not examples:
        raise ValueError("no trainable impressions in the encoder split")

    weights = init_encoder_weights(mode, params.dim, params.heads, seed=params.seed)
    rng = np.random.default_rng(derive_seed(params.seed, f"encoder-order:{mode}"))
    order = np.arange(len(examples))
    cursor = len(examples)
    trace = np.empty(params.steps)

    for step in range(params.steps):
        if cursor >= len(examples):
            rng.shuffle(order)
            cursor = 0
        example = examples[order[cursor]]
        cursor += 1

        vec, cache = encode_example(weights, example)
        scores, cos_cache = cosine_scores_forward(example.items, vec)
        lambdas, loss = lambda_gradients(scores, example.labels)
        if not np.isfinite(loss):
            raise TrainingError(step, f"non-finite encoder loss in mode {mode!r}")
        trace[step] = loss

        dvec = cosine_scores_backward_vec(lambdas, cos_cache)
        grads = zero_gradients(weights)
        if mode == TRANSFORMER:
            transformer_backward(dvec, cache, weights, grads)
        else:
            perceiver_backward(dvec, cache, weights, grads)

        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if params.clip_norm > 0 and total > params.clip_norm:
            scale = params.clip_norm / total
            for g in grads.values():
                g *= scale
        for f in weights.param_fields():
            getattr(weights, f)[...] -= params.learning_rate * grads[f]
    return weights, trace


def encoder_training_ndcg(
    weights: EncoderWeights, examples: list[EncoderExample], k: int = 10
) -> float:
    from sessionrank.ltr import ndcg

    values = []
    for example in examples:
        vec, _ = encode_example(weights, example)
        scores, _ = cosine_scores_forward(example.items, vec)
        values.append(ndcg(scores, example.labels, k))
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# Weight files: header lines then one flat array per parameter, decimal text.

def save_encoder_weights(
    weights: EncoderWeights, path: str, extra: dict[str, str] | None = None
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# sessionrank encoder weights v1\n")
        fh.write(f"mode={weights.mode}\n")
        fh.write(f"dim={weights.dim}\n")
        fh.write(f"heads={weights.heads}\n")
        fh.write(f"layers={LAYERS}\n")
        fh.write(f"seed={weights.seed}\n")
        for key, value in (extra or {}).items():
            fh.write(f"{key}={value}\n")
        for name in weights.param_fields():
            arr = getattr(weights, name)
            fh.write(f"param {name} {','.join(str(s) for s in arr.shape)}\n")
            fh.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")


def load_encoder_weights(path: str) -> tuple[EncoderWeights, dict[str, str]]:
    header: dict[str, str] = {}
    params: dict[str, np.ndarray] = {}
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
            params[name] = np.array(
                [float(v) for v in lines[i + 1].split()], dtype=np.float64
            ).reshape(shape)
            i += 2
            continue
        key, _, value = line.partition("=")
        header[key] = value
        i += 1
    mode = header["mode"]
    weights = EncoderWeights(
        mode=mode,
        dim=int(header["dim"]),
        heads=int(header["heads"]),
        seed=int(header["seed"]),
        **{f: params[f] for f in _BASE_FIELDS},
        **(
            {f: params[f] for f in _CROSS_FIELDS}
            if mode == PERCEIVER
            else {"cq": None, "ck": None, "cv": None}
        ),
    )
    meta = {
        k: v
        for k, v in header.items()
        if k not in ("mode", "dim", "heads", "layers", "seed")
    }
    return weights, meta
