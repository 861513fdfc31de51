"""Top-K ranking by estimated scores and the welfare users actually receive."""

from __future__ import annotations

import math

import numpy as np

from .core import UsageError, check_attention, default_attention  # noqa: F401  (re-export)

NSW_FLOOR = 1e-9


def rank_topk(strategies, u_hat, K: int) -> np.ndarray:
    """Indices of the K highest-scoring creators for one estimated user, best first."""
    strategies = np.asarray(strategies, dtype=np.float64)
    n = strategies.shape[0]
    if not 1 <= K <= n:
        raise UsageError(f"K={K} must be between 1 and the number of creators ({n})")
    scores = strategies @ np.asarray(u_hat, dtype=np.float64)
    return np.argsort(-scores, kind="stable")[:K]


def rank_topk_all(strategies, u_hat, K: int) -> np.ndarray:
    strategies = np.asarray(strategies, dtype=np.float64)
    n = strategies.shape[0]
    if not 1 <= K <= n:
        raise UsageError(f"K={K} must be between 1 and the number of creators ({n})")
    scores = np.atleast_2d(u_hat) @ strategies.T
    return np.argsort(-scores, axis=1, kind="stable")[:, :K]


def user_utility(strategies, u_true, u_hat, attention) -> float:
    """Attention-weighted true utility of the items ranked by the estimate."""
    r = check_attention(attention)
    top = rank_topk(strategies, u_hat, r.shape[0])
    values = np.asarray(strategies)[top] @ np.asarray(u_true, dtype=np.float64)
    return float(r @ values)


def per_user_utilities(strategies, users_true, u_hat, attention) -> np.ndarray:
    r = check_attention(attention)
    strategies = np.asarray(strategies, dtype=np.float64)
    U = np.atleast_2d(np.asarray(users_true, dtype=np.float64))
    top = rank_topk_all(strategies, u_hat, r.shape[0])  # (m, K)
    true_scores = U @ strategies.T  # (m, n)
    picked = np.take_along_axis(true_scores, top, axis=1)
    return picked @ r


def total_welfare(strategies, users_true, u_hat, attention) -> float:
    return math.fsum(per_user_utilities(strategies, users_true, u_hat, attention))


def nash_social_welfare(per_user, floor: float = NSW_FLOOR) -> float:
    """Geometric mean of per-user utilities, each floored at ``floor``."""
    w = np.asarray(per_user, dtype=np.float64)
    if w.size == 0:
        raise UsageError("Nash social welfare needs at least one user")
    return float(np.exp(np.mean(np.log(np.maximum(w, floor)))))
