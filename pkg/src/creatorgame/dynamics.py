"""Local Better Response (LBR) dynamics for the creators.

Each round visits every creator once.  The visited creator draws a uniformly
random direction g on the full unit sphere and tries ``s_j + eta * g``.  The
move is kept if the creator's utility at the candidate is at least its
current utility; a kept move is then projected back onto the nonnegative
unit sphere.  By default the utility is evaluated at the unprojected
candidate (``evaluate="candidate"``); ``evaluate="projected"`` evaluates it
at the feasible point instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .core import GameInstance, UsageError, project_nonneg_sphere, unit_nonneg_rows
from .estimator import EstimatedUsers
from .mechanisms import column_utility
from .welfare import total_welfare

UPDATE_ORDERS = ("round_robin", "random_permutation")
EVALUATE_AT = ("candidate", "projected")


@dataclass(frozen=True)
class DynamicsConfig:
    eta: float = 0.05
    horizon_T: int = 800
    update_order: str = "round_robin"
    seed: int = 0
    evaluate: str = "candidate"

    def __post_init__(self):
        if not (0 < self.eta <= 1):
            raise UsageError("eta must be in (0, 1]")
        if self.horizon_T < 0:
            raise UsageError("horizon_T must be >= 0")
        if self.update_order not in UPDATE_ORDERS:
            raise UsageError(f"update_order must be one of {UPDATE_ORDERS}")
        if self.evaluate not in EVALUATE_AT:
            raise UsageError(f"evaluate must be one of {EVALUATE_AT}")


@dataclass(frozen=True)
class StrategyProfile:
    strategies: np.ndarray  # (n, d)
    step: int = 0

    def __post_init__(self):
        s = unit_nonneg_rows(self.strategies)
        s.setflags(write=False)
        object.__setattr__(self, "strategies", s)

    @classmethod
    def initial(cls, instance: GameInstance) -> "StrategyProfile":
        return cls(instance.contents_init, 0)


def random_direction(rng: np.random.Generator, d: int) -> np.ndarray:
    while True:
        g = rng.standard_normal(d)
        norm = np.linalg.norm(g)
        if norm > 0:
            return g / norm


def _scores(u_hat, strategies):
    return np.ascontiguousarray(np.asarray(u_hat) @ np.asarray(strategies).T)


def lbr_step(profile: StrategyProfile, j: int, instance: GameInstance,
             estimates: EstimatedUsers, cfg: DynamicsConfig, rng: np.random.Generator,
             direction: Optional[np.ndarray] = None) -> StrategyProfile:
    """One better-response attempt by creator j (step counter unchanged)."""
    S = profile.strategies
    if not 0 <= j < S.shape[0]:
        raise UsageError(f"creator index {j} out of range")
    g = random_direction(rng, S.shape[1]) if direction is None else np.asarray(direction)
    u_hat = estimates.u_hat
    board = _scores(u_hat, S)
    current = column_utility(board[:, j], board, j, instance.mechanism, instance.attention)
    cand = S[j] + cfg.eta * g
    moved = project_nonneg_sphere(cand, fallback=S[j])
    probe = moved if cfg.evaluate == "projected" else cand
    value = column_utility(u_hat @ probe, board, j, instance.mechanism, instance.attention)
    if value >= current:
        new = np.array(S)
        new[j] = moved
        return StrategyProfile(new, profile.step)
    return profile


@dataclass
class Trace:
    """Per-round record of a dynamics run.  Row 0 is the initial profile."""

    steps: np.ndarray
    utilities: np.ndarray  # (T+1, n)
    welfare: np.ndarray  # (T+1,)
    final: StrategyProfile
    accepted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_csv(self, path) -> Path:
        """Write long-format rows (step, creator_id, utility, welfare)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "creator_id", "utility", "welfare"])
            for row, step in enumerate(self.steps):
                for j, u in enumerate(self.utilities[row]):
                    w.writerow([int(step), j, repr(float(u)), repr(float(self.welfare[row]))])
        return path


def _random_streams(cfg: DynamicsConfig, n: int, d: int, rng: np.random.Generator):
    T = cfg.horizon_T
    g = rng.standard_normal((T, n, d))
    norms = np.linalg.norm(g, axis=2, keepdims=True)
    g /= norms
    if cfg.update_order == "round_robin":
        order = np.tile(np.arange(n, dtype=np.int64), (T, 1))
    else:
        order = np.argsort(rng.random((T, n)), axis=1).astype(np.int64)
    return np.ascontiguousarray(g), np.ascontiguousarray(order)


def run_dynamics(instance: GameInstance, estimates: EstimatedUsers, cfg: DynamicsConfig,
                 rng: Optional[np.random.Generator] = None, record: bool = True,
                 start: Optional[StrategyProfile] = None) -> Trace:
    """Apply ``cfg.horizon_T`` LBR rounds starting from the initial contents.

    All randomness (directions and visiting order) is drawn up front from
    ``rng`` (default: ``cfg.seed``), so identical seeds give identical traces.
    With ``record=False`` only the final profile is kept.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    profile = start if start is not None else StrategyProfile.initial(instance)
    n, d = profile.strategies.shape
    directions, order = _random_streams(cfg, n, d, rng)
    strategies = np.array(profile.strategies)
    u_hat = np.ascontiguousarray(estimates.u_hat, dtype=np.float64)
    u_true = np.ascontiguousarray(instance.users_true)
    attn = np.ascontiguousarray(instance.attention)
    T = cfg.horizon_T
    rows = T + 1 if record else 1
    util = np.zeros((rows, n))
    welfare = np.zeros(rows)
    accepted = np.zeros(n, dtype=np.int64)
    _kernels.lbr_run(strategies, u_hat, u_true, directions, order, float(cfg.eta),
                     instance.mechanism.code, attn, float(instance.mechanism.beta),
                     cfg.evaluate == "projected", record, util, welfare, accepted)
    final = StrategyProfile(strategies, profile.step + T)
    if record:
        steps = np.arange(profile.step, profile.step + T + 1)
    else:
        steps = np.array([final.step])
        board = _scores(u_hat, final.strategies)
        util[0] = [column_utility(board[:, j], board, j, instance.mechanism, attn) for j in range(n)]
        welfare[0] = total_welfare(final.strategies, u_true, u_hat, attn)
    return Trace(steps, util, welfare, final, accepted)


def run_dynamics_reference(instance: GameInstance, estimates: EstimatedUsers,
                           cfg: DynamicsConfig, rng: Optional[np.random.Generator] = None
                           ) -> StrategyProfile:
    """Pure-numpy twin of :func:`run_dynamics` built from :func:`lbr_step` (slow)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    profile = StrategyProfile.initial(instance)
    n, d = profile.strategies.shape
    directions, order = _random_streams(cfg, n, d, rng)
    for t in range(cfg.horizon_T):
        for j in order[t]:
            profile = lbr_step(profile, int(j), instance, estimates, cfg, rng,
                               direction=directions[t, j])
        profile = StrategyProfile(profile.strategies, profile.step + 1)
    return profile


def count_improving_deviations(profile: StrategyProfile, j: int, instance: GameInstance,
                               estimates: EstimatedUsers, n_samples: int, eta: float,
                               rng: np.random.Generator) -> int:
    """How many sampled feasible deviations strictly raise creator j's utility.

    Deviations are ``project(s_j + eta * g)`` for random unit directions g,
    i.e. points of the strategy space near s_j.
    """
    S = profile.strategies
    u_hat = estimates.u_hat
    board = _scores(u_hat, S)
    current = column_utility(board[:, j], board, j, instance.mechanism, instance.attention)
    g = rng.standard_normal((n_samples, S.shape[1]))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    count = 0
    for k in range(n_samples):
        dev = project_nonneg_sphere(S[j] + eta * g[k], fallback=S[j])
        if column_utility(u_hat @ dev, board, j, instance.mechanism, instance.attention) > current:
            count += 1
    return count
