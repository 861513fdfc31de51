"""Shared domain types, nonnegative-sphere geometry and the matching score."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .mechanisms import MechanismId

UNIT_TOL = 1e-9
EXACT_UNIT_TOL = 1e-14


class UsageError(ValueError):
    """Raised when an operation is called with inconsistent arguments."""


class DegenerateProjectionError(ValueError):
    """The vector has no positive entry, so it cannot be mapped onto the sphere."""


def _frozen(a, ndim=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)  # always a private copy
    if ndim is not None and arr.ndim != ndim:
        raise UsageError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError("non-finite entries")
    arr.setflags(write=False)
    return arr


def match_score(s, u) -> float:
    """Inner-product matching score between a content vector and a user vector."""
    s = np.asarray(s, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if s.shape != u.shape:
        raise UsageError(f"dimension mismatch: {s.shape} vs {u.shape}")
    return float(np.dot(s, u))


def project_nonneg_sphere(x, fallback=None) -> np.ndarray:
    """Clamp negative entries to zero, then rescale to unit l2 norm.

    If nothing positive survives the clamp, ``fallback`` is returned (as a
    copy) when given; otherwise :class:`DegenerateProjectionError` is raised.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise UsageError("cannot project a non-finite vector")
    y = np.maximum(x, 0.0)
    if not np.any(y > 0):
        if fallback is None:
            raise DegenerateProjectionError("all entries are <= 0 after clamping")
        return np.array(fallback, dtype=np.float64)
    return _normalize(y)


def unit_nonneg(x, tol: float = UNIT_TOL) -> np.ndarray:
    """Validate (and renormalise) a vector that should live on the nonnegative sphere."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise UsageError("negative entry in a nonnegative unit vector")
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > tol:
        raise UsageError(f"norm {norm!r} differs from 1 by more than {tol}")
    return _normalize(x)


def unit_nonneg_rows(X, tol: float = UNIT_TOL) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise UsageError("expected an (n, d) array of strategies")
    if np.any(X < 0):
        raise UsageError("negative entry in a nonnegative unit vector")
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise UsageError("a row is not unit norm")
    return np.vstack([_normalize(row) for row in X]) if len(X) else X.copy()


def _normalize(v: np.ndarray) -> np.ndarray:
    # vectors already unit to rounding are returned as-is, which makes
    # projection idempotent bitwise; scaling by the max avoids under/overflow
    if abs(np.linalg.norm(v) - 1.0) <= EXACT_UNIT_TOL:
        return np.array(v, dtype=np.float64)
    z = v / np.max(np.abs(v))
    return z / np.linalg.norm(z)


@dataclass(frozen=True)
class NoiseModel:
    """Observation noise added to every rating entry.

    ``kind`` is one of ``gaussian`` (``scale`` = standard deviation),
    ``uniform`` (``scale`` = half-width of the support) or ``none``.
    """

    kind: str = "none"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "none"):
            raise UsageError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and not (self.scale > 0 and np.isfinite(self.scale)):
            raise UsageError(f"{self.kind} noise needs a positive scale")

    @classmethod
    def gaussian(cls, sigma_e: float) -> "NoiseModel":
        return cls("gaussian", float(sigma_e))

    @classmethod
    def uniform(cls, e_bar: float) -> "NoiseModel":
        return cls("uniform", float(e_bar))

    @classmethod
    def none(cls) -> "NoiseModel":
        return cls("none", 0.0)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, self.scale, size=shape)
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size=shape)
        return np.zeros(shape)


@dataclass(frozen=True, eq=False)
class GameInstance:
    """One game: ridge strength, true users, initial contents and platform rules.

    Arrays are copied and marked read-only on construction.  Use
    :func:`dataclasses.replace` to derive a variant (e.g. another lambda).
    """

    lam: float
    users_true: np.ndarray  # (m, d)
    contents_init: np.ndarray  # (n, d), rows on the nonnegative unit sphere
    noise: NoiseModel
    K: int
    mechanism: "MechanismId"
    attention: np.ndarray  # (K,)
    seed: int = 0
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise UsageError(f"lambda must be finite and >= 0, got {self.lam!r}")
        users = _frozen(self.users_true, ndim=2)
        contents = unit_nonneg_rows(_frozen(self.contents_init, ndim=2))
        contents.setflags(write=False)
        if users.shape[1] != contents.shape[1]:
            raise UsageError("users and contents have different dimension")
        n = contents.shape[0]
        if not (1 <= int(self.K) <= n):
            raise UsageError(f"K must be in 1..{n}, got {self.K}")
        attention = _frozen(self.attention, ndim=1)
        if attention.shape[0] != self.K:
            raise UsageError("attention must have exactly K weights")
        check_attention(attention)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "users_true", users)
        object.__setattr__(self, "contents_init", contents)
        object.__setattr__(self, "attention", attention)

    @property
    def m(self) -> int:
        return self.users_true.shape[0]

    @property
    def n(self) -> int:
        return self.contents_init.shape[0]

    @property
    def d(self) -> int:
        return self.users_true.shape[1]

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "users_true": self.users_true.tolist(),
            "contents_init": self.contents_init.tolist(),
            "noise": {"kind": self.noise.kind, "scale": self.noise.scale},
            "K": self.K,
            "mechanism": self.mechanism.name,
            "attention": self.attention.tolist(),
            "seed": self.seed,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GameInstance":
        from .mechanisms import MechanismId

        return cls(
            lam=data["lam"],
            users_true=np.array(data["users_true"], dtype=np.float64),
            contents_init=np.array(data["contents_init"], dtype=np.float64),
            noise=NoiseModel(**data["noise"]),
            K=data["K"],
            mechanism=MechanismId.parse(data["mechanism"]),
            attention=np.array(data["attention"], dtype=np.float64),
            seed=data["seed"],
            label=data.get("label", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GameInstance":
        return cls.from_dict(json.loads(text))


def default_attention(K: int) -> np.ndarray:
    """Position weights 1/log2(k+1) for k = 1..K."""
    k = np.arange(1, int(K) + 1)
    return 1.0 / np.log2(k + 1.0)


def check_attention(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise UsageError("attention weights must be a nonempty 1-d sequence")
    if np.any(r < 0):
        raise UsageError("attention weights must be nonnegative")
    if np.any(np.diff(r) > 0):
        raise UsageError("attention weights must be nonincreasing")
    return r


def as_attention(K: int, attention: Optional[np.ndarray] = None) -> np.ndarray:
    if attention is None:
        return default_attention(K)
    return check_attention(attention)
