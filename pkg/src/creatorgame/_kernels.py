"""Compiled inner loops for Local Better Response dynamics.

The numpy implementations in ``mechanisms`` and ``welfare`` are the
reference; these kernels must agree with them (see tests/test_dynamics.py).
"""

import math

import numba
import numpy as np

EXPOSURE, ENGAGEMENT, SOFTMAX, WINNER = 0, 1, 2, 3
EXACT_UNIT_TOL = 1e-14


@numba.njit(cache=True)
def column_utility(cand, S, j, kind, attn, beta):
    """Total reward of creator j when its scores are ``cand`` and everyone else's are S."""
    m, n = S.shape
    K = attn.shape[0]
    total = 0.0
    for i in range(m):
        c = cand[i]
        if kind == SOFTMAX:
            mx = c
            for t in range(n):
                if t != j and S[i, t] > mx:
                    mx = S[i, t]
            denom = 0.0
            for t in range(n):
                if t == j:
                    denom += math.exp(beta * (c - mx))
                else:
                    denom += math.exp(beta * (S[i, t] - mx))
            total += math.exp(beta * (c - mx)) / denom
            continue
        rank = 0
        for t in range(n):
            if t == j:
                continue
            x = S[i, t]
            if x > c or (x == c and t < j):
                rank += 1
        if kind == EXPOSURE:
            if rank < K:
                total += attn[rank]
        elif kind == ENGAGEMENT:
            if rank < K and c > 0.0:
                total += attn[rank] * c
        else:
            if rank == 0 and c > 0.0:
                total += c
    return total


@numba.njit(cache=True)
def scores_for(U_hat, s):
    m, d = U_hat.shape
    out = np.empty(m)
    for i in range(m):
        acc = 0.0
        for k in range(d):
            acc += U_hat[i, k] * s[k]
        out[i] = acc
    return out


@numba.njit(cache=True)
def welfare_total(S, U_true, strategies, attn):
    """Sum over users of attention-weighted true utility of the top-K by S."""
    m, n = S.shape
    K = attn.shape[0]
    d = strategies.shape[1]
    taken = np.zeros(n, dtype=np.bool_)
    total = 0.0
    for i in range(m):
        taken[:] = False
        for k in range(K):
            best = -1
            for t in range(n):
                if taken[t]:
                    continue
                if best < 0 or S[i, t] > S[i, best]:
                    best = t
            taken[best] = True
            val = 0.0
            for q in range(d):
                val += strategies[best, q] * U_true[i, q]
            total += attn[k] * val
    return total


@numba.njit(cache=True)
def project_inplace(x, fallback, out):
    """Same rule as ``core.project_nonneg_sphere``; False if the fallback was used."""
    d = x.shape[0]
    mx = 0.0
    norm2 = 0.0
    for k in range(d):
        v = x[k] if x[k] > 0.0 else 0.0
        out[k] = v
        norm2 += v * v
        if v > mx:
            mx = v
    if mx == 0.0:
        out[:] = fallback
        return False
    if abs(math.sqrt(norm2) - 1.0) <= EXACT_UNIT_TOL:
        return True
    norm2 = 0.0
    for k in range(d):
        out[k] = out[k] / mx
        norm2 += out[k] * out[k]
    norm = math.sqrt(norm2)
    for k in range(d):
        out[k] = out[k] / norm
    return True


@numba.njit(cache=True)
def lbr_run(strategies, U_hat, U_true, directions, order, eta, kind, attn, beta,
            evaluate_projected, record, util_trace, welfare_trace, accepted):
    """Run ``directions.shape[0]`` rounds of LBR in place on ``strategies``.

    directions: (T, n, d) unit vectors; order: (T, n) creator visiting order.
    When ``record`` is set, util_trace (T+1, n) and welfare_trace (T+1,) are
    filled with the state before the first round and after every round.
    """
    T = directions.shape[0]
    n, d = strategies.shape
    m = U_hat.shape[0]
    S = np.empty((m, n))
    for t in range(n):
        S[:, t] = scores_for(U_hat, strategies[t])
    cand = np.empty(d)
    proj = np.empty(d)
    if record:
        for t in range(n):
            util_trace[0, t] = column_utility(S[:, t], S, t, kind, attn, beta)
        welfare_trace[0] = welfare_total(S, U_true, strategies, attn)
    for step in range(T):
        for q in range(n):
            j = order[step, q]
            for k in range(d):
                cand[k] = strategies[j, k] + eta * directions[step, j, k]
            current = column_utility(S[:, j], S, j, kind, attn, beta)
            ok = False
            if evaluate_projected:
                ok = project_inplace(cand, strategies[j], proj)
                cs = scores_for(U_hat, proj)
            else:
                cs = scores_for(U_hat, cand)
            if column_utility(cs, S, j, kind, attn, beta) >= current:
                if not evaluate_projected:
                    ok = project_inplace(cand, strategies[j], proj)
                if ok:
                    strategies[j, :] = proj
                    S[:, j] = scores_for(U_hat, proj)
                    accepted[j] += 1
        if record:
            for t in range(n):
                util_trace[step + 1, t] = column_utility(S[:, t], S, t, kind, attn, beta)
            welfare_trace[step + 1] = welfare_total(S, U_true, strategies, attn)
