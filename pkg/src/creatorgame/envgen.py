"""Game-instance construction: the two-group toy game, synthetic markets, rating datasets."""

from __future__ import annotations

import gzip
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import GameInstance, NoiseModel, UsageError, as_attention
from .mechanisms import MechanismId
from .theory import PreNTParams

log = logging.getLogger(__name__)

Mechanism = Union[MechanismId, str]


class ParseError(ValueError):
    pass


def _mech(m: Mechanism) -> MechanismId:
    return m if isinstance(m, MechanismId) else MechanismId.parse(m)


# -- stylised two-group game --------------------------------------------------

def build_prent(p: PreNTParams, K: int = 1, mechanism: Mechanism = "exposure_topk",
                attention=None, seed: int = 0, lam: float = 0.0) -> GameInstance:
    """Single user in 2-d: N_T copies of e1 (trend), N_N copies of e2 (niche), uniform noise."""
    v_T = np.array([1.0, 0.0])
    v_N = np.array([0.0, 1.0])
    contents = np.vstack([np.tile(v_T, (p.N_T, 1)), np.tile(v_N, (p.N_N, 1))])
    user = p.theta_T * v_T + p.theta_N * v_N
    return GameInstance(
        lam=lam, users_true=user[None, :], contents_init=contents,
        noise=NoiseModel.uniform(p.E_bar), K=K, mechanism=_mech(mechanism),
        attention=as_attention(K, attention), seed=seed, label="prent",
        meta={"params": p, "v_T": v_T, "v_N": v_N},
    )


# -- synthetic trend / niche markets ------------------------------------------

def orthonormal_nonneg_pair(d: int, rng: np.random.Generator):
    """Two unit vectors in the nonnegative orthant with disjoint supports (hence orthogonal)."""
    if d < 2:
        raise UsageError("need d >= 2 for two orthogonal nonnegative directions")
    perm = rng.permutation(d)
    cut = int(rng.integers(1, d))
    vecs = []
    for support in (perm[:cut], perm[cut:]):
        v = np.zeros(d)
        v[support] = rng.uniform(0.05, 1.0, size=support.size)
        vecs.append(v / np.linalg.norm(v))
    return vecs[0], vecs[1]


def sample_cone_weights(kind: str, m: int, rng: np.random.Generator):
    """(alpha, beta) uniform on the unit square restricted to alpha > beta (trend) or beta > alpha."""
    if kind not in ("trend", "niche"):
        raise UsageError("market kind must be 'trend' or 'niche'")
    xy = rng.uniform(0.0, 1.0, size=(m, 2))
    while True:
        tie = xy[:, 0] == xy[:, 1]
        if not tie.any():
            break
        xy[tie] = rng.uniform(0.0, 1.0, size=(int(tie.sum()), 2))
    hi, lo = xy.max(axis=1), xy.min(axis=1)
    return (hi, lo) if kind == "trend" else (lo, hi)


@dataclass(frozen=True)
class SyntheticMarket:
    instance: GameInstance
    v_T: np.ndarray
    v_N: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    kind: str


def synthetic_market(kind: str = "trend", m: int = 400, n: int = 10, d: int = 10, N_T: int = 9,
                     N_N: int = 1, sigma_e: float = 0.5, K: int = 1,
                     mechanism: Mechanism = "exposure_topk", seed: int = 0, lam: float = 0.0,
                     attention=None) -> SyntheticMarket:
    if N_T + N_N != n:
        raise UsageError(f"N_T + N_N must equal n ({N_T} + {N_N} != {n})")
    rng = np.random.default_rng(seed)
    v_T, v_N = orthonormal_nonneg_pair(d, rng)
    alpha, beta = sample_cone_weights(kind, m, rng)
    users = alpha[:, None] * v_T[None, :] + beta[:, None] * v_N[None, :]
    contents = np.vstack([np.tile(v_T, (N_T, 1)), np.tile(v_N, (N_N, 1))])
    inst = GameInstance(
        lam=lam, users_true=users, contents_init=contents, noise=NoiseModel.gaussian(sigma_e),
        K=K, mechanism=_mech(mechanism), attention=as_attention(K, attention), seed=seed,
        label=f"{kind}_market",
        meta={"v_T": v_T, "v_N": v_N, "alpha": alpha, "beta": beta, "kind": kind},
    )
    return SyntheticMarket(inst, v_T, v_N, alpha, beta, kind)


def build_synthetic_market(kind: str = "trend", **kwargs) -> GameInstance:
    """Trend or Niche Market instance (see :func:`synthetic_market` for the parameters)."""
    return synthetic_market(kind, **kwargs).instance


# -- rating datasets ------------------------------------------------------------

def _natural_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


@dataclass
class RatingTable:
    """Deduplicated (user, item, rating, timestamp) triples with dense 0-based ids."""

    users: np.ndarray  # int, dense user index per triple
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray
    user_ids: list = field(default_factory=list)  # dense index -> source id
    item_ids: list = field(default_factory=list)

    @classmethod
    def from_triples(cls, triples) -> "RatingTable":
        latest = {}
        for user, item, rating, ts in triples:
            key = (user, item)
            prev = latest.get(key)
            if prev is None or ts >= prev[1]:
                latest[key] = (rating, ts)
        if not latest:
            raise ParseError("no ratings")
        user_ids = sorted({u for u, _ in latest}, key=_natural_key)
        item_ids = sorted({i for _, i in latest}, key=_natural_key)
        uix = {u: k for k, u in enumerate(user_ids)}
        iix = {i: k for k, i in enumerate(item_ids)}
        keys = sorted(latest, key=lambda k: (uix[k[0]], iix[k[1]]))
        return cls(
            users=np.array([uix[u] for u, _ in keys], dtype=np.int64),
            items=np.array([iix[i] for _, i in keys], dtype=np.int64),
            ratings=np.array([latest[k][0] for k in keys], dtype=np.float64),
            timestamps=np.array([latest[k][1] for k in keys], dtype=np.int64),
            user_ids=user_ids, item_ids=item_ids,
        )

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return self.ratings.shape[0]

    def to_dense(self) -> np.ndarray:
        """Users x items matrix with unobserved entries set to 0."""
        M = np.zeros((self.n_users, self.n_items))
        M[self.users, self.items] = self.ratings
        return M

    def save_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write("user_id,item_id,rating,timestamp\n")
            for u, i, r, t in zip(self.users, self.items, self.ratings, self.timestamps):
                fh.write(f"{self.user_ids[u]},{self.item_ids[i]},{float(r)!r},{int(t)}\n")
        return path

    @classmethod
    def load_csv(cls, path) -> "RatingTable":
        triples = []
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("user_id"):
                raise ParseError(f"{path}: missing header")
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(",")
                if len(parts) != 4:
                    raise ParseError(f"{path}:{lineno}: expected 4 fields")
                try:
                    triples.append((parts[0], parts[1], float(parts[2]), int(parts[3])))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
        return cls.from_triples(triples)


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return path.open("r", encoding="utf-8", errors="replace")


def parse_movielens(path) -> RatingTable:
    """MovieLens ``u.data``: tab-separated user, item, rating, timestamp."""
    triples = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.strip().split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            try:
                triples.append((parts[0], parts[1], float(parts[2]), int(parts[3])))
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not triples:
        raise ParseError(f"{path}: empty file")
    return RatingTable.from_triples(triples)


def parse_amazon_5core(path) -> RatingTable:
    """Amazon 5-core reviews: one JSON record per line (reviewerID, asin, overall, unixReviewTime)."""
    triples = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                triples.append((str(rec["reviewerID"]), str(rec["asin"]), float(rec["overall"]),
                                int(rec.get("unixReviewTime", 0))))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed record ({exc!r})") from None
    if not triples:
        raise ParseError(f"{path}: empty file")
    return RatingTable.from_triples(triples)


# -- NMF ----------------------------------------------------------------------

_EPS = 1e-300


@dataclass
class NmfFactors:
    W: np.ndarray  # (m, d) user factors
    H: np.ndarray  # (n_items, d) item factors
    error: float  # final Frobenius reconstruction error
    iterations: int = 0
    seed: int = 0
    converged: bool = False
    history: list = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def relative_error(self, V) -> float:
        return self.error / float(np.linalg.norm(V))

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "W.csv", self.W, delimiter=",", fmt="%.17g")
        np.savetxt(out / "H.csv", self.H, delimiter=",", fmt="%.17g")
        manifest = {
            "d": self.d, "seed": self.seed, "error": self.error, "iterations": self.iterations,
            "converged": self.converged, "objective": "frobenius",
            "unobserved": "zero-filled", "users": self.W.shape[0], "items": self.H.shape[0],
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return out

    @classmethod
    def load(cls, out_dir) -> "NmfFactors":
        out = Path(out_dir)
        man = json.loads((out / "manifest.json").read_text())
        W = np.loadtxt(out / "W.csv", delimiter=",", ndmin=2)
        H = np.loadtxt(out / "H.csv", delimiter=",", ndmin=2)
        return cls(W, H, man["error"], man["iterations"], man["seed"], man["converged"])


def factorize_nmf(data, d: int = 16, max_iter: int = 500, tol: float = 1e-4, seed: int = 0,
                  callback=None) -> NmfFactors:
    """Lee-Seung multiplicative updates for min ||V - W H^T||_F with W, H >= 0.

    ``data`` is a :class:`RatingTable` (unobserved entries become 0) or a
    dense nonnegative matrix.  Stops after ``max_iter`` sweeps or when the
    relative change of the objective drops below ``tol``.  ``callback(it, W, H)``
    is called after every sweep (H is passed as (d, n_items)).
    """
    if d < 1:
        raise UsageError("d must be >= 1")
    V = data.to_dense() if isinstance(data, RatingTable) else np.asarray(data, dtype=np.float64)
    if V.size == 0:
        raise UsageError("empty rating matrix")
    if np.any(V < 0):
        raise UsageError("NMF needs a nonnegative matrix")
    rng = np.random.default_rng(seed)
    m, n = V.shape
    scale = np.sqrt(V.mean() / d)
    W = rng.uniform(0.0, 1.0, size=(m, d)) * scale
    Ht = rng.uniform(0.0, 1.0, size=(d, n)) * scale
    err = np.linalg.norm(V - W @ Ht)
    history = [float(err)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Ht *= (W.T @ V) / np.maximum(W.T @ W @ Ht, _EPS)
        W *= (V @ Ht.T) / np.maximum(W @ (Ht @ Ht.T), _EPS)
        new = float(np.linalg.norm(V - W @ Ht))
        history.append(new)
        if callback is not None:
            callback(it, W, Ht)
        rel = abs(err - new) / max(err, _EPS)
        err = new
        if rel < tol:
            converged = True
            break
    if not converged:
        log.info("NMF stopped at max_iter=%d (last relative change above tol=%g)", max_iter, tol)
    return NmfFactors(W, np.ascontiguousarray(Ht.T), float(err), it, seed, converged, history)


def build_dataset_instance(factors: NmfFactors, n_creators: int = 10, sigma_e: float = 0.3,
                           K: int = 1, mechanism: Mechanism = "exposure_topk", seed: int = 0,
                           lam: float = 0.0, attention=None) -> GameInstance:
    """All NMF users as ground truth; ``n_creators`` random item rows, l2-normalised, as contents."""
    H = np.asarray(factors.H)
    norms = np.linalg.norm(H, axis=1)
    eligible = np.flatnonzero(norms > 0)
    if eligible.size < n_creators:
        raise UsageError(f"only {eligible.size} nonzero item rows, need {n_creators}")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(eligible, size=n_creators, replace=False))
    contents = H[chosen] / norms[chosen, None]
    return GameInstance(
        lam=lam, users_true=np.asarray(factors.W), contents_init=contents,
        noise=NoiseModel.gaussian(sigma_e), K=K, mechanism=_mech(mechanism),
        attention=as_attention(K, attention), seed=seed, label="dataset",
        meta={"items": chosen},
    )
