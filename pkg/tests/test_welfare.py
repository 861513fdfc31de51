import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creatorgame import _kernels
from creatorgame.core import UsageError, default_attention
from creatorgame.envgen import build_synthetic_market
from creatorgame.estimator import estimate_users, generate_ratings
from creatorgame.welfare import (
    NSW_FLOOR,
    nash_social_welfare,
    per_user_utilities,
    rank_topk,
    total_welfare,
    user_utility,
)

PRENT = np.vstack([np.tile([1.0, 0.0], (9, 1)), [[0.0, 1.0]]])


def _basis_contents(scores):
    # basis contents, so the estimate vector carries the scores directly
    n = len(scores)
    return np.eye(n), np.asarray(scores, dtype=float)


def test_rank_topk_examples():
    S, u = _basis_contents([0.3, 0.9, 0.5])
    np.testing.assert_array_equal(rank_topk(S, u, 2), [1, 2])
    S, u = _basis_contents([0.4, 0.4, 0.4])
    np.testing.assert_array_equal(rank_topk(S, u, 3), [0, 1, 2])
    S, u = _basis_contents([0.1, 0.7, 0.2, 0.7])
    assert sorted(rank_topk(S, u, 4)) == [0, 1, 2, 3]
    with pytest.raises(UsageError):
        rank_topk(S, u, 5)


def test_user_utility_examples():
    assert user_utility(PRENT, [0.8, 0.6], [0.72, 0.30], [1.0]) == pytest.approx(0.8, abs=1e-15)
    u = np.array([3.0, 4.0])
    contents = np.array([[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]])
    assert user_utility(contents, u, u, [1.0]) == pytest.approx(5.0, abs=1e-14)
    assert user_utility(PRENT, [0.8, 0.6], [0.72, 0.30], [0.0, 0.0]) == 0.0


def test_total_welfare_examples():
    rng = np.random.default_rng(0)
    U = rng.uniform(size=(5, 2))
    Uh = U + rng.normal(scale=0.1, size=U.shape)
    r = default_attention(2)
    assert total_welfare(PRENT, U[:1], Uh[:1], r) == pytest.approx(user_utility(PRENT, U[0], Uh[0], r))
    double = total_welfare(PRENT, np.vstack([U, U]), np.vstack([Uh, Uh]), r)
    assert double == pytest.approx(2 * total_welfare(PRENT, U, Uh, r), rel=1e-15)
    perm = rng.permutation(5)
    assert total_welfare(PRENT, U[perm], Uh[perm], r) == pytest.approx(total_welfare(PRENT, U, Uh, r),
                                                                       rel=1e-15)


def test_trend_market_regularisation_helps_nonstrategic():
    inst = build_synthetic_market("trend", seed=3)
    totals = {0.0: [], 10.0: []}
    for k in range(50):
        R = generate_ratings(inst, np.random.default_rng(k))
        for lam in totals:
            est = estimate_users(R, inst.contents_init, lam, allow_jitter=True)
            totals[lam].append(total_welfare(inst.contents_init, inst.users_true, est.u_hat, inst.attention))
    assert np.mean(totals[10.0]) >= np.mean(totals[0.0])


def test_nsw_examples():
    assert nash_social_welfare([0.3, 0.3, 0.3]) == pytest.approx(0.3, rel=1e-15)
    assert nash_social_welfare([1.0, 4.0]) == pytest.approx(2.0, rel=1e-15)
    small = nash_social_welfare([0.0, 1.0])
    assert small == pytest.approx(math.sqrt(NSW_FLOOR))
    with pytest.raises(UsageError):
        nash_social_welfare([])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_ranking_invariant_to_scaling_estimate(seed, c):
    rng = np.random.default_rng(seed)
    S = np.abs(rng.normal(size=(6, 3)))
    S /= np.linalg.norm(S, axis=1, keepdims=True)
    u = rng.normal(size=3)
    np.testing.assert_array_equal(rank_topk(S, u, 3), rank_topk(S, c * u, 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2), st.floats(0, 1))
def test_utility_monotone_in_attention(seed, k, bump):
    rng = np.random.default_rng(seed)
    S = np.abs(rng.normal(size=(5, 3)))
    S /= np.linalg.norm(S, axis=1, keepdims=True)
    u, uh = np.abs(rng.normal(size=3)), rng.normal(size=3)
    r = default_attention(3)
    r2 = r.copy()
    r2[: k + 1] += bump  # raise a prefix so the weights stay nonincreasing
    assert user_utility(S, u, uh, r2) >= user_utility(S, u, uh, r) - 1e-15


def test_kernel_welfare_matches_reference():
    rng = np.random.default_rng(9)
    S = np.abs(rng.normal(size=(7, 4)))
    S /= np.linalg.norm(S, axis=1, keepdims=True)
    U, Uh = rng.normal(size=(30, 4)), rng.normal(size=(30, 4))
    Uh[:10] = 0.0  # all-tie rows
    r = default_attention(3)
    board = np.ascontiguousarray(Uh @ S.T)
    assert _kernels.welfare_total(board, U, S, r) == pytest.approx(total_welfare(S, U, Uh, r), rel=1e-12)
    np.testing.assert_allclose(per_user_utilities(S, U, Uh, r).sum(), total_welfare(S, U, Uh, r))
