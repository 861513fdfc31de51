"""Lambda sweeps over platform modes, optimal-lambda extraction and report export.

A *mode* is either ``nonstrategic`` (welfare of the initial contents) or a
mechanism name (welfare after LBR dynamics under that mechanism).  Every
cell's randomness is derived from its coordinates, never from execution
order, so a sweep gives identical numbers for any worker count.

Variance reduction: the rating noise of replicate ``k`` is the same draw
for every lambda and every mode, and the LBR directions of (mode, k) are
shared across lambdas.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import plotting
from .core import GameInstance
from .dynamics import DynamicsConfig, Trace, run_dynamics
from .estimator import estimate_users, generate_ratings
from .mechanisms import MechanismId
from .welfare import nash_social_welfare, per_user_utilities

log = logging.getLogger(__name__)

NONSTRATEGIC = "nonstrategic"
OBJECTIVES = ("user_welfare", "nash_social_welfare")
SYNTHETIC_GRID = (0.0, 0.1, 1.0, 10.0, 100.0)
DATASET_GRID = tuple(round(0.1 * k, 1) for k in range(11))


class CellError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    lambda_grid: tuple = SYNTHETIC_GRID
    mechanisms: tuple = ()
    include_nonstrategic: bool = True
    replicates: int = 50
    objective: str = "user_welfare"
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    master_seed: int = 0

    def __post_init__(self):
        grid = tuple(float(x) for x in self.lambda_grid)
        if not grid:
            raise ValueError("lambda grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("lambda grid must be sorted ascending without duplicates")
        if grid[0] < 0:
            raise ValueError("lambda must be >= 0")
        mechs = tuple(m if isinstance(m, MechanismId) else MechanismId.parse(m)
                      for m in self.mechanisms)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not mechs and not self.include_nonstrategic:
            raise ValueError("nothing to sweep")
        object.__setattr__(self, "lambda_grid", grid)
        object.__setattr__(self, "mechanisms", mechs)

    @property
    def modes(self) -> list:
        out = [NONSTRATEGIC] if self.include_nonstrategic else []
        return out + [m.name for m in self.mechanisms]

    def mechanism_for(self, mode: str) -> Optional[MechanismId]:
        if mode == NONSTRATEGIC:
            return None
        return MechanismId.parse(mode)


def mode_id(mode: str) -> int:
    return zlib.crc32(mode.encode())


def noise_seed(master_seed: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), 0, int(replicate)])


def dynamics_seed(master_seed: int, mode: str, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), 1, mode_id(mode), int(replicate)])


@dataclass
class CellOutcome:
    welfare: float
    nsw: float
    trace: Optional[Trace] = None
    jittered: bool = False


def run_cell(instance: Union[GameInstance, Callable[[], GameInstance]], lam: float,
             mode: Union[str, MechanismId, None], noise_stream, dynamics_stream=None,
             dynamics: Optional[DynamicsConfig] = None, record_trace: bool = False
             ) -> CellOutcome:
    """Welfare of one (lambda, mode, noise draw).

    Ratings are drawn from ``noise_stream`` and the users estimated at
    ``lam``.  Non-strategic mode ranks the initial contents; a mechanism
    mode first runs LBR (``dynamics``, randomness from ``dynamics_stream``)
    and ranks the final profile.
    """
    inst = instance() if callable(instance) else instance
    mech = None
    if isinstance(mode, MechanismId):
        mech = mode
    elif mode not in (None, NONSTRATEGIC):
        mech = MechanismId.parse(mode)
    inst = replace(inst, lam=float(lam), **({"mechanism": mech} if mech else {}))
    ratings = generate_ratings(inst, np.random.default_rng(noise_stream))
    est = estimate_users(ratings, inst.contents_init, inst.lam, allow_jitter=True)
    trace = None
    if mech is None:
        strategies = inst.contents_init
    else:
        cfg = dynamics or DynamicsConfig()
        rng = np.random.default_rng(dynamics_stream if dynamics_stream is not None else cfg.seed)
        trace = run_dynamics(inst, est, cfg, rng=rng, record=record_trace)
        strategies = trace.final.strategies
    per_user = per_user_utilities(strategies, inst.users_true, est.u_hat, inst.attention)
    return CellOutcome(math.fsum(per_user), nash_social_welfare(per_user),
                       trace if record_trace else None, est.jittered)


@dataclass(frozen=True)
class CellRecord:
    lam: float
    mode: str
    replicate: int
    welfare: float
    nsw: float


def _cell_task(args):
    instance, spec, lam, mode, rep = args
    try:
        out = run_cell(instance, lam, mode, noise_seed(spec.master_seed, rep),
                       dynamics_seed(spec.master_seed, mode, rep), spec.dynamics)
    except Exception as exc:  # attach coordinates, keep the original as cause
        raise CellError(f"cell failed: lambda={lam!r} mode={mode} replicate={rep}: {exc}") from exc
    return CellRecord(lam, mode, rep, out.welfare, out.nsw)


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list

    def aggregates(self) -> list:
        return aggregate_cells(self.cells, self.spec.modes)

    def optima(self, objective: Optional[str] = None) -> dict:
        return optimal_lambdas(self.aggregates(), objective or self.spec.objective)


def run_sweep(spec: SweepSpec, instance: Union[GameInstance, Callable[[], GameInstance]],
              workers: int = 1, progress: bool = False) -> SweepResult:
    """Evaluate every (lambda, mode, replicate) cell, optionally on a process pool."""
    inst = instance() if callable(instance) else instance
    tasks = [(inst, spec, lam, mode, rep)
             for lam in spec.lambda_grid for mode in spec.modes for rep in range(spec.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        cells = []
        for k, t in enumerate(tasks):
            cells.append(_cell_task(t))
            if progress and (k + 1) % 50 == 0:
                log.info("%d/%d cells", k + 1, len(tasks))
    return SweepResult(spec, cells)


# -- aggregation --------------------------------------------------------------

def _mean_se(values):
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def aggregate_cells(cells: Sequence[CellRecord], modes: Optional[Sequence[str]] = None) -> list:
    groups = {}
    for c in cells:
        groups.setdefault((c.mode, c.lam), []).append(c)
    if modes is None:
        modes = list(dict.fromkeys(c.mode for c in cells))
    rows = []
    for mode in modes:
        for lam in sorted({lam for (md, lam) in groups if md == mode}):
            group = groups[(mode, lam)]
            wm, ws = _mean_se([c.welfare for c in group])
            nm, ns = _mean_se([c.nsw for c in group])
            rows.append({"lambda": lam, "mode": mode, "n": len(group), "welfare_mean": wm,
                         "welfare_stderr": ws, "nsw_mean": nm, "nsw_stderr": ns})
    return rows


def optimal_lambdas(aggregates: Sequence[dict], objective: str = "user_welfare") -> dict:
    """Per mode, the lambda with the largest mean objective (ties -> smallest lambda)."""
    key = "welfare" if objective == "user_welfare" else "nsw"
    best = {}
    for row in sorted(aggregates, key=lambda r: r["lambda"]):
        cur = best.get(row["mode"])
        if cur is None or row[f"{key}_mean"] > cur[f"{key}_mean"]:
            best[row["mode"]] = row
    return {mode: {"lambda_star": r["lambda"], "objective": objective,
                   "welfare_mean": r[f"{key}_mean"], "welfare_stderr": r[f"{key}_stderr"]}
            for mode, r in best.items()}


# -- persistence ----------------------------------------------------------------

CELL_FIELDS = ("lambda", "mode", "replicate", "welfare", "nsw")


def write_cells(cells: Sequence[CellRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_FIELDS)
        for c in cells:
            w.writerow([repr(c.lam), c.mode, c.replicate, repr(c.welfare), repr(c.nsw)])
    return path


def read_cells(path) -> list:
    with Path(path).open(newline="") as fh:
        return [CellRecord(float(r["lambda"]), r["mode"], int(r["replicate"]), float(r["welfare"]),
                           float(r["nsw"])) for r in csv.DictReader(fh)]


def _spec_dict(spec: SweepSpec) -> dict:
    d = asdict(spec)
    d["mechanisms"] = [m.name for m in spec.mechanisms]
    d["lambda_grid"] = list(spec.lambda_grid)
    return d


def export_results(result: SweepResult, out_dir, title: Optional[str] = None) -> dict:
    """Write cells, aggregates, optima, per-mode plot data and the welfare-vs-lambda figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"cells": write_cells(result.cells, out / "cells.csv")}
    aggs = result.aggregates()
    with (out / "aggregates.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(aggs[0]), lineterminator="\n")
        w.writeheader()
        for row in aggs:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    files["aggregates"] = out / "aggregates.csv"
    optima = result.optima()
    (out / "optima.json").write_text(json.dumps(optima, indent=2))
    files["optima"] = out / "optima.json"
    (out / "spec.json").write_text(json.dumps(_spec_dict(result.spec), indent=2))
    key = "welfare" if result.spec.objective == "user_welfare" else "nsw"
    curves = {}
    for mode in result.spec.modes:
        rows = [r for r in aggs if r["mode"] == mode]
        p = out / f"plot_{mode.replace(':', '_')}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "mean", "stderr"])
            for r in rows:
                w.writerow([repr(r["lambda"]), repr(r[f"{key}_mean"]), repr(r[f"{key}_stderr"])])
        files[f"plot_{mode}"] = p
        curves[mode] = ([r["lambda"] for r in rows], [r[f"{key}_mean"] for r in rows],
                        [r[f"{key}_stderr"] for r in rows])
    ylabel = "user welfare" if key == "welfare" else "Nash social welfare"
    figs = plotting.welfare_curves(curves, out / "welfare_curve", ylabel=ylabel, title=title)
    for f in figs:
        files[f"figure_{f.suffix[1:]}"] = f
    return files
