"""Reward mechanisms and creator utility.

Four mechanisms ship, all individually monotone (raising your own score never
lowers your own reward):

``exposure_topk``
    r_k if the creator is ranked k-th within the user's top-K, else 0.
``engagement_topk``
    r_k * max(score, 0) within the top-K, else 0.
``softmax_share``
    exp(beta * score) / sum_t exp(beta * score_t).
``winner_value``
    max(score, 0) for the top-ranked creator, else 0.

Ranking ties go to the lower creator index.  Negative scores (possible when a
ridge estimate leaves the nonnegative orthant) earn nothing under the
score-weighted mechanisms, which keeps them monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels
from .core import UsageError, as_attention

KINDS = ("exposure_topk", "engagement_topk", "softmax_share", "winner_value")

# experiment labels used in figure legends
ALIASES = {
    "M3_expo": "exposure_topk",
    "M3_enga": "engagement_topk",
    "BRCM": "softmax_share",
    "M3_0": "winner_value",
}

DEFAULT_BETA = 5.0


@dataclass(frozen=True)
class MechanismId:
    kind: str
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown mechanism {self.kind!r}; choose from {', '.join(KINDS)}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise UsageError("softmax beta must be finite and positive")

    @classmethod
    def parse(cls, text: str) -> "MechanismId":
        """Parse ``exposure_topk`` or ``softmax_share:10`` (beta after the colon)."""
        name, _, arg = str(text).partition(":")
        name = ALIASES.get(name, name)
        if arg:
            if name != "softmax_share":
                raise UsageError(f"mechanism {name!r} takes no parameter")
            return cls(name, float(arg))
        return cls(name)

    @property
    def name(self) -> str:
        if self.kind == "softmax_share" and self.beta != DEFAULT_BETA:
            return f"softmax_share:{self.beta!r}"
        return self.kind

    @property
    def code(self) -> int:
        return KINDS.index(self.kind)


@dataclass(frozen=True)
class ScoreBoard:
    """Estimated matching scores, one row per user and one column per creator."""

    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 2 or not np.all(np.isfinite(s)):
            raise UsageError("score board must be a finite (m, n) array")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @classmethod
    def from_profile(cls, strategies, u_hat) -> "ScoreBoard":
        return cls(np.asarray(u_hat) @ np.asarray(strategies).T)

    @property
    def shape(self):
        return self.scores.shape


def rank_positions(scores: np.ndarray) -> np.ndarray:
    """0-based rank of every creator for every user (ties -> lower index first)."""
    scores = np.atleast_2d(scores)
    order = np.argsort(-scores, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(scores.shape[0])[:, None]
    ranks[rows, order] = np.arange(scores.shape[1])[None, :]
    return ranks


def reward_matrix(scores, mech: MechanismId, attention) -> np.ndarray:
    """Per-user, per-creator rewards for an (m, n) score array."""
    S = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    r = np.asarray(attention, dtype=np.float64)
    K = r.shape[0]
    if K > S.shape[1]:
        raise UsageError("K exceeds the number of creators")
    if mech.kind == "softmax_share":
        z = mech.beta * (S - S.max(axis=1, keepdims=True))
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    ranks = rank_positions(S)
    if mech.kind == "winner_value":
        return np.where(ranks == 0, np.maximum(S, 0.0), 0.0)
    padded = np.concatenate([r, [0.0]])
    base = padded[np.minimum(ranks, K)]
    if mech.kind == "exposure_topk":
        return base
    if mech.kind == "engagement_topk":
        return base * np.maximum(S, 0.0)
    raise UsageError(f"unknown mechanism {mech.kind!r}")


def creator_utility(j: int, board: ScoreBoard, mech: MechanismId, attention) -> float:
    """Reward of creator j summed over all users."""
    n = board.shape[1]
    if not 0 <= j < n:
        raise UsageError(f"creator index {j} out of range 0..{n - 1}")
    return float(reward_matrix(board.scores, mech, attention)[:, j].sum())


def creator_utilities(board: ScoreBoard, mech: MechanismId, attention) -> np.ndarray:
    return reward_matrix(board.scores, mech, attention).sum(axis=0)


def column_utility(candidate_scores, scores, j: int, mech: MechanismId, attention) -> float:
    """Creator j's utility if its score column were replaced by ``candidate_scores``."""
    S = np.ascontiguousarray(scores, dtype=np.float64)
    c = np.ascontiguousarray(candidate_scores, dtype=np.float64)
    r = np.ascontiguousarray(attention, dtype=np.float64)
    return float(_kernels.column_utility(c, S, int(j), mech.code, r, float(mech.beta)))


RewardFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class MonotonicityReport:
    mechanism: str
    trials: int
    passed: bool
    counterexample: Optional[dict] = None

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"{self.mechanism}: {status} ({self.trials} trials)"


def _as_reward_fn(mech) -> tuple[str, RewardFn]:
    if isinstance(mech, MechanismId):
        return mech.name, lambda s, r: reward_matrix(s, mech, r)
    if isinstance(mech, str):
        return _as_reward_fn(MechanismId.parse(mech))
    if callable(mech):
        return getattr(mech, "__name__", "custom"), mech
    raise UsageError(f"not a mechanism: {mech!r}")


def check_individual_monotonicity(mech: Union[MechanismId, str, RewardFn], trials: int,
                                  rng: np.random.Generator, max_creators: int = 10,
                                  batch: int = 2000) -> MonotonicityReport:
    """Randomised test that raising one creator's score never lowers its reward.

    Each trial draws a creator count n, a K <= n, a score vector (a third of
    them on a coarse grid so ties are common), a creator t and an increment;
    it then compares t's reward before and after.  ``mech`` may also be a
    callable ``f(scores (b, n), attention (K,)) -> rewards (b, n)``.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    name, fn = _as_reward_fn(mech)
    done = 0
    while done < trials:
        n = int(rng.integers(2, max_creators + 1))
        K = int(rng.integers(1, n + 1))
        attn = as_attention(K)
        b = min(batch, trials - done)
        S = rng.uniform(0.0, 1.0, size=(b, n))
        grid = rng.random(b) < 1 / 3
        S[grid] = np.round(S[grid] * 4) / 4
        t = rng.integers(0, n, size=b)
        delta = rng.exponential(0.2, size=b)
        snap = rng.random(b) < 0.25  # jump exactly onto another creator's score
        other = (t + rng.integers(1, n, size=b)) % n
        rows = np.arange(b)
        raised = S.copy()
        target = np.where(snap, np.maximum(S[rows, other], S[rows, t]), S[rows, t] + delta)
        raised[rows, t] = target
        before = np.asarray(fn(S, attn))[rows, t]
        after = np.asarray(fn(raised, attn))[rows, t]
        bad = np.flatnonzero(after < before)
        if bad.size:
            k = int(bad[0])
            return MonotonicityReport(name, done + k + 1, False, {
                "scores": S[k].tolist(), "raised": raised[k].tolist(), "creator": int(t[k]),
                "K": K, "reward_before": float(before[k]), "reward_after": float(after[k]),
            })
        done += b
    return MonotonicityReport(name, trials, True)
