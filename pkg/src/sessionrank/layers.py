"""Dense-array neural building blocks with explicit backward passes.

Everything runs in float64 on small arrays (sequence length <= 5), so
clarity beats throughput. Each ``*_forward`` returns (output, cache); the
matching ``*_backward`` consumes the upstream gradient plus that cache and
returns input/parameter gradients. Gradients are exact for the forward
computation as written, which is what the finite-difference suites check.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

LN_EPS = 1e-5


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(dy: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    """Jacobian-vector product given the softmax output ``y``."""
    return y * (dy - np.sum(dy * y, axis=axis, keepdims=True))


def layer_norm_forward(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Row-wise layer norm over the last axis with learned affine."""
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    x_hat = (x - mean) * inv_std
    return gain * x_hat + bias, (x_hat, inv_std, gain)


def layer_norm_backward(
    dy: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x_hat, inv_std, gain = cache
    dgain = np.sum(dy * x_hat, axis=tuple(range(dy.ndim - 1)))
    dbias = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dx_hat = dy * gain
    dx = inv_std * (
        dx_hat
        - dx_hat.mean(axis=-1, keepdims=True)
        - x_hat * (dx_hat * x_hat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def mha_forward(
    x: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    wo: np.ndarray,
    n_heads: int,
) -> tuple[np.ndarray, dict]:
    """Multi-head scaled-dot-product self-attention over x of shape (m, d)."""
    m, d = x.shape
    hd = d // n_heads
    q = x @ wq
    k = x @ wk
    v = x @ wv
    qh = q.reshape(m, n_heads, hd).transpose(1, 0, 2)  # (H, m, hd)
    kh = k.reshape(m, n_heads, hd).transpose(1, 0, 2)
    vh = v.reshape(m, n_heads, hd).transpose(1, 0, 2)
    scale = 1.0 / np.sqrt(hd)
    attn = softmax(qh @ kh.transpose(0, 2, 1) * scale, axis=-1)  # (H, m, m)
    merged = (attn @ vh).transpose(1, 0, 2).reshape(m, d)
    out = merged @ wo
    cache = {
        "x": x, "qh": qh, "kh": kh, "vh": vh, "attn": attn, "merged": merged,
        "wq": wq, "wk": wk, "wv": wv, "wo": wo, "n_heads": n_heads, "scale": scale,
    }
    return out, cache


def mha_backward(
    dy: np.ndarray, cache: dict
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    x, qh, kh, vh = cache["x"], cache["qh"], cache["kh"], cache["vh"]
    attn, merged = cache["attn"], cache["merged"]
    n_heads, scale = cache["n_heads"], cache["scale"]
    m, d = x.shape
    hd = d // n_heads

    dwo = merged.T @ dy
    dmerged = dy @ cache["wo"].T
    dctx = dmerged.reshape(m, n_heads, hd).transpose(1, 0, 2)
    dattn = dctx @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ dctx
    dscores = softmax_backward(dattn, attn)
    dqh = dscores @ kh * scale
    dkh = dscores.transpose(0, 2, 1) @ qh * scale

    dq = dqh.transpose(1, 0, 2).reshape(m, d)
    dk = dkh.transpose(1, 0, 2).reshape(m, d)
    dv = dvh.transpose(1, 0, 2).reshape(m, d)
    dwq = x.T @ dq
    dwk = x.T @ dk
    dwv = x.T @ dv
    dx = dq @ cache["wq"].T + dk @ cache["wk"].T + dv @ cache["wv"].T
    return dx, dwq, dwk, dwv, dwo


def ff_forward(
    x: np.ndarray, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Position-wise feed-forward with GELU hidden activation."""
    z = x @ w1 + b1
    a = gelu(z)
    return a @ w2 + b2, (x, z, a, w1, w2)


def ff_backward(dy: np.ndarray, cache: tuple):
    x, z, a, w1, w2 = cache
    dw2 = a.T @ dy
    db2 = dy.sum(axis=0)
    dz = (dy @ w2.T) * gelu_grad(z)
    dw1 = x.T @ dz
    db1 = dz.sum(axis=0)
    dx = dz @ w1.T
    return dx, dw1, db1, dw2, db2


def cosine_scores_forward(items: np.ndarray, vec: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Cosine of each row of ``items`` (n, d) against ``vec`` (d,)."""
    item_norms = np.linalg.norm(items, axis=1)
    vec_norm = float(np.linalg.norm(vec))
    if vec_norm == 0.0 or np.any(item_norms == 0.0):
        raise ValueError("cosine undefined for zero vectors")
    scores = (items @ vec) / (item_norms * vec_norm)
    return scores, (items, vec, item_norms, vec_norm, scores)


def cosine_scores_backward_vec(dscores: np.ndarray, cache: tuple) -> np.ndarray:
    """Gradient w.r.t. ``vec`` only (item embeddings are fixed inputs)."""
    items, vec, item_norms, vec_norm, scores = cache
    term1 = (items / item_norms[:, None]).T @ dscores / vec_norm
    term2 = float(dscores @ scores) * vec / (vec_norm * vec_norm)
    return term1 - term2
