"""Closed forms and Monte Carlo estimates for the two-group (trend/niche) single-user game.

Content is ``N_T`` copies of a trend direction and ``N_N`` copies of an
orthogonal niche direction; the user is ``theta_T v_T + theta_N v_N``; each
rating carries i.i.d. U(-E_bar, E_bar) noise.  With those contents the ridge
estimate has coordinates ``N_g (theta_g + mean_noise_g) / (N_g + lam)`` on
the two directions, which every function below works from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import UsageError, as_attention

BISECT_HI = 1e6
BISECT_TOL = 1e-10


@dataclass(frozen=True)
class PreNTParams:
    N_T: int
    N_N: int
    theta_T: float
    theta_N: float
    E_bar: float

    def __post_init__(self):
        if not (int(self.N_T) == self.N_T and int(self.N_N) == self.N_N):
            raise UsageError("group sizes must be integers")
        if self.N_N < 1 or self.N_T < 2 or self.N_T <= self.N_N:
            raise UsageError("need N_T > N_N >= 1 and N_T >= 2")
        if not (self.theta_T > 0 and self.theta_N > 0 and self.E_bar > 0):
            raise UsageError("theta_T, theta_N and E_bar must be positive")
        if not self.E_bar < self.noise_bound:
            raise UsageError(
                f"E_bar={self.E_bar} violates the noise bound {self.noise_bound:.6g} "
                "= (N_T - N_N)/(N_T + N_N) * min(theta_T, theta_N)")

    @property
    def noise_bound(self) -> float:
        return (self.N_T - self.N_N) / (self.N_T + self.N_N) * min(self.theta_T, self.theta_N)

    @property
    def u(self) -> np.ndarray:
        return np.array([self.theta_T, self.theta_N])


@dataclass(frozen=True)
class NoiseRealization:
    eps_bar_T: float = 0.0
    eps_bar_N: float = 0.0


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def __iter__(self):
        return iter((self.mean, self.stderr))


def _estimate(samples) -> Estimate:
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(x.mean()), se, n)


ZERO = NoiseRealization()


def estimate_coords(lam, p: PreNTParams, e: NoiseRealization = ZERO):
    """(trend, niche) coordinates of the ridge estimate; broadcasts over arrays."""
    a = p.N_T * (p.theta_T + np.asarray(e.eps_bar_T)) / (p.N_T + lam)
    b = p.N_N * (p.theta_N + np.asarray(e.eps_bar_N)) / (p.N_N + lam)
    return a, b


def f_gap(lam, p: PreNTParams, e: NoiseRealization = ZERO):
    """Estimate's score gap between trend and niche content, u_hat . (v_T - v_N)."""
    if np.any(np.asarray(lam) < 0):
        raise UsageError("lambda must be >= 0")
    a, b = estimate_coords(lam, p, e)
    return a - b


def f_gap_derivative(lam, p: PreNTParams, e: NoiseRealization = ZERO):
    return (-p.N_T * (p.theta_T + e.eps_bar_T) / (p.N_T + lam) ** 2
            + p.N_N * (p.theta_N + e.eps_bar_N) / (p.N_N + lam) ** 2)


def f_gap_root(p: PreNTParams, e: NoiseRealization, lo: float = 0.0, hi: float = BISECT_HI,
               tol: float = BISECT_TOL) -> Optional[float]:
    """Bisection root of f_gap in [lo, hi]; None when there is no sign change."""
    flo = f_gap(lo, p, e)
    fhi = f_gap(hi, p, e)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        return None
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        fm = f_gap(mid, p, e)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambda_non_lower(p: PreNTParams) -> float:
    """Smallest lambda beyond which a trend-preferring user is always shown trend content."""
    if not p.theta_T > p.theta_N:
        raise UsageError("lambda_non_lower needs a trend-preferring user (theta_T > theta_N)")
    E = p.E_bar
    if E > (p.theta_T - p.theta_N) / 2:
        num = p.N_T * p.N_N * (p.theta_N - p.theta_T + 2 * E)
        den = p.N_T * (p.theta_T - E) - p.N_N * (p.theta_N + E)
        return num / den
    return 0.0


def lambda_non_lower_ratio_form(p: PreNTParams) -> float:
    """Same bound, with its cases written through (theta_T - E)/(theta_N + E)."""
    E = p.E_bar
    ratio = (p.theta_T - E) / (p.theta_N + E)
    if ratio >= 1:
        return 0.0
    if p.N_N / p.N_T < ratio:
        return (p.N_T * p.N_N * (p.theta_N - p.theta_T + 2 * E)
                / (p.N_T * (p.theta_T - E) - p.N_N * (p.theta_N + E)))
    return math.inf


def lambda_non_upper(p: PreNTParams) -> float:
    """Largest lambda up to which a niche-preferring user is never shown trend content.

    Returns 0 when even small regularisation can flip the ranking, +inf when
    no lambda can, and otherwise the lambda at which the worst-case noise
    (trend +E_bar, niche -E_bar) makes the two scores equal.
    """
    if not p.theta_T < p.theta_N:
        raise UsageError("lambda_non_upper needs a niche-preferring user (theta_T < theta_N)")
    E = p.E_bar
    if E >= (p.theta_N - p.theta_T) / 2:
        return 0.0
    if (p.N_N * p.theta_N - p.N_T * p.theta_T) / (p.N_T + p.N_N) < E:
        num = p.N_T * p.N_N * ((p.theta_N - E) - (p.theta_T + E))
        den = p.N_T * (p.theta_T + E) - p.N_N * (p.theta_N - E)
        return num / den
    return math.inf


def a_ratio(lam, p: PreNTParams, e: NoiseRealization = ZERO):
    """Ratio of the estimate's trend coordinate to its niche coordinate."""
    den = p.theta_N + np.asarray(e.eps_bar_N)
    if np.any(den == 0):
        raise ZeroDivisionError("theta_N + mean niche noise is zero")
    return (p.N_T * (p.N_N + lam) * (p.theta_T + np.asarray(e.eps_bar_T))
            / (p.N_N * (p.N_T + lam) * den))


def b_term(lam, p: PreNTParams, e: NoiseRealization = ZERO):
    A = a_ratio(lam, p, e)
    return A * (p.theta_T / p.theta_N - A) / (A * A + 1.0) ** 1.5


def sample_group_noise(p: PreNTParams, n_samples: int, rng: np.random.Generator,
                       chunk: int = 20000) -> NoiseRealization:
    """Exact group-mean noises: draw every item's uniform noise and average per group."""
    if n_samples < 1:
        raise UsageError("n_samples must be >= 1")
    eT = np.empty(n_samples)
    eN = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        stop = min(start + chunk, n_samples)
        k = stop - start
        eT[start:stop] = rng.uniform(-p.E_bar, p.E_bar, size=(k, p.N_T)).mean(axis=1)
        eN[start:stop] = rng.uniform(-p.E_bar, p.E_bar, size=(k, p.N_N)).mean(axis=1)
    return NoiseRealization(eT, eN)


def gradient_prefactor(lam, p: PreNTParams, attention=None) -> float:
    r = as_attention(1, attention)
    return float(r.sum() * (p.N_T - p.N_N) * p.theta_N / ((p.N_T + lam) * (p.N_N + lam)))


def welfare_gradient_strategic(lam, p: PreNTParams, n_samples: int, rng: np.random.Generator,
                               attention=None, noise: Optional[NoiseRealization] = None
                               ) -> Estimate:
    """Monte Carlo d/dlambda of the equilibrium welfare (estimate and its stderr)."""
    e = noise if noise is not None else sample_group_noise(p, n_samples, rng)
    return _estimate(gradient_prefactor(lam, p, attention) * b_term(lam, p, e))


def lambda_str_upper(p: PreNTParams, alpha: float) -> float:
    """Closed-form lambda beyond which equilibrium welfare decreases (large-N_T regime).

    Returns ``nan`` when the formula's denominator is not positive, i.e. the
    group sizes are too small for the bound to apply.
    """
    if not 0 < alpha < 0.5:
        raise UsageError("alpha must lie in (0, 0.5)")
    NT, NN = float(p.N_T), float(p.N_N)
    tT, tN, E = p.theta_T, p.theta_N, p.E_bar
    c = 1 + 1 / NT
    num = NT * NN * (E * c * tT * NN ** (alpha - 0.5) + E * tN * NT ** (alpha - 0.5) + tN * tT / NT)
    den = (tT * tN * (NT - NN * c) - E * tN * NT ** (alpha + 0.5)
           - E * c * tT * NN ** (alpha + 0.5))
    if not den > 0:
        return math.nan
    return num / den


def nonstrategic_samples(lam, p: PreNTParams, e: NoiseRealization, attention=None,
                         u_weights=None):
    """Per-draw welfare with the initial contents: trend shown iff its score is not lower.

    An exact tie goes to trend, as the ranking breaks ties toward the lower
    index and trend items come first.

    ``u_weights`` = (u.v_T, u.v_N), defaulting to (theta_T, theta_N).
    """
    r = as_attention(1, attention)
    wT, wN = (p.theta_T, p.theta_N) if u_weights is None else u_weights
    trend = f_gap(lam, p, e) >= 0
    return r.sum() * np.where(trend, wT, wN)


def expected_welfare_nonstrategic(lam, p: PreNTParams, n_samples: int, rng: np.random.Generator,
                                  attention=None, u_weights=None,
                                  noise: Optional[NoiseRealization] = None) -> Estimate:
    """E[sum_k r_k (P * u.v_T + (1 - P) * u.v_N)] with P = Pr[trend ranked first]."""
    e = noise if noise is not None else sample_group_noise(p, n_samples, rng)
    return _estimate(nonstrategic_samples(lam, p, e, attention, u_weights))


def trend_probability(lam, p: PreNTParams, e: NoiseRealization) -> float:
    return float(np.mean(f_gap(lam, p, e) >= 0))


def strategic_samples(lam, p: PreNTParams, e: NoiseRealization, attention=None):
    """Per-draw equilibrium welfare: cosine between the estimate and the true user."""
    r = as_attention(1, attention)
    a, b = estimate_coords(lam, p, e)
    return r.sum() * (p.theta_T * a + p.theta_N * b) / np.hypot(a, b)


def expected_welfare_strategic(lam, p: PreNTParams, n_samples: int, rng: np.random.Generator,
                               attention=None, noise: Optional[NoiseRealization] = None
                               ) -> Estimate:
    e = noise if noise is not None else sample_group_noise(p, n_samples, rng)
    return _estimate(strategic_samples(lam, p, e, attention))
