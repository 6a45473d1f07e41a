"""Pure-numpy lambdaRank gradient kernel (fallback for the compiled core).

For one impression: over every ordered item pair (i, j) with gain_i >
gain_j, accumulate

    lambda_ij = -sigma * |dNDCG_ij| / (1 + exp(sigma * (s_i - s_j)))

onto item i and its negation onto item j, where |dNDCG_ij| is the NDCG
change from swapping the pair in the current score-sorted order. The
returned loss is the matching pairwise cross-entropy, each term weighted by
|dNDCG_ij|.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def lambda_core(
    scores: np.ndarray,
    gains: np.ndarray,
    discounts: np.ndarray,
    inv_max_dcg: float,
    sigma: float,
) -> tuple[np.ndarray, float]:
    score_diff = scores[:, None] - scores[None, :]
    gain_diff = gains[:, None] - gains[None, :]
    better = gain_diff > 0
    delta = np.abs(gain_diff * (discounts[:, None] - discounts[None, :])) * inv_max_dcg
    pair = np.where(better, -sigma * delta * expit(-sigma * score_diff), 0.0)
    lambdas = pair.sum(axis=1) - pair.sum(axis=0)
    loss = float(
        np.sum(np.where(better, delta * np.logaddexp(0.0, -sigma * score_diff), 0.0))
    )
    return lambdas, loss
