"""Noisy rating generation and the closed-form ridge estimate of user features."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import GameInstance, UsageError

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
JITTER = 1e-10


class RankDeficiencyError(np.linalg.LinAlgError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(
            f"content Gram matrix is numerically singular at lambda=0 "
            f"(condition number {cond:.3e} >= {COND_LIMIT:.0e})"
        )


@dataclass(frozen=True)
class EstimatedUsers:
    u_hat: np.ndarray  # (m, d)
    lambda_used: float
    jittered: bool = False


def generate_ratings(instance: GameInstance, rng: np.random.Generator) -> np.ndarray:
    """Draw R = U V^T + eps for the instance's true users and initial contents."""
    exact = instance.users_true @ instance.contents_init.T
    return exact + instance.noise.sample(rng, exact.shape)


def _factor(contents: np.ndarray, lam: float, allow_jitter: bool):
    d = contents.shape[1]
    gram = contents.T @ contents
    jittered = False
    if lam == 0.0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond >= COND_LIMIT:
            if not allow_jitter:
                raise RankDeficiencyError(float(cond))
            log.info("singular Gram at lambda=0 (cond=%.3e); adding %g*I", cond, JITTER)
            gram = gram + JITTER * np.eye(d)
            jittered = True
    else:
        gram = gram + lam * np.eye(d)
    try:
        return cho_factor(gram, lower=True), jittered
    except LinAlgError:
        if lam != 0.0 or not allow_jitter or jittered:
            raise
        log.info("Cholesky failed at lambda=0; adding %g*I", JITTER)
        return cho_factor(gram + JITTER * np.eye(d), lower=True), True


def estimate_users(ratings, contents, lam: float, *, allow_jitter: bool = False,
                   clip: bool = False) -> EstimatedUsers:
    """Ridge estimate (sum_j v_j v_j^T + lam I)^-1 sum_j R_ij v_j for every user row.

    One Cholesky factorisation is shared by all users.  At ``lam == 0`` a
    rank-deficient Gram matrix raises :class:`RankDeficiencyError` unless
    ``allow_jitter`` is set, in which case ``1e-10 * I`` is added and the
    returned object is flagged.  ``clip`` clamps estimates to the
    nonnegative orthant (off by default).
    """
    if not (lam >= 0 and np.isfinite(lam)):
        raise UsageError(f"lambda must be finite and >= 0, got {lam!r}")
    R = np.atleast_2d(np.asarray(ratings, dtype=np.float64))
    V = np.asarray(contents, dtype=np.float64)
    if R.shape[1] != V.shape[0]:
        raise UsageError(f"ratings have {R.shape[1]} columns but there are {V.shape[0]} contents")
    factor, jittered = _factor(V, float(lam), allow_jitter)
    rhs = V.T @ R.T  # (d, m)
    u_hat = cho_solve(factor, rhs).T
    if clip:
        u_hat = np.maximum(u_hat, 0.0)
    u_hat.setflags(write=False)
    return EstimatedUsers(u_hat=u_hat, lambda_used=float(lam), jittered=jittered)


def estimate_user(ratings_row, contents, lam: float, **kwargs) -> np.ndarray:
    est = estimate_users(np.asarray(ratings_row, dtype=np.float64)[None, :], contents, lam, **kwargs)
    return np.array(est.u_hat[0])


def ridge_loss(u, ratings_row, contents, lam: float) -> float:
    resid = np.asarray(ratings_row) - np.asarray(contents) @ np.asarray(u)
    return float(resid @ resid + lam * np.dot(u, u))
