import dataclasses
import json
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from creatorgame import harness
from creatorgame.core import NoiseModel
from creatorgame.dynamics import DynamicsConfig
from creatorgame.envgen import build_prent, build_synthetic_market
from creatorgame.harness import (
    CellError,
    CellRecord,
    SweepSpec,
    aggregate_cells,
    export_results,
    optimal_lambdas,
    read_cells,
    run_cell,
    run_sweep,
)
from creatorgame.theory import PreNTParams

SMALL = dict(m=40, seed=2)


def small_spec(**kw):
    base = dict(lambda_grid=(0.0, 1.0, 10.0), mechanisms=("exposure_topk", "softmax_share"),
                replicates=3, dynamics=DynamicsConfig(horizon_T=10), master_seed=5)
    base.update(kw)
    return SweepSpec(**base)


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(lambda_grid=())
    with pytest.raises(ValueError):
        SweepSpec(lambda_grid=(1.0, 0.5))
    with pytest.raises(ValueError):
        SweepSpec(lambda_grid=(0.5, 0.5))
    with pytest.raises(ValueError):
        SweepSpec(replicates=0)
    with pytest.raises(ValueError):
        SweepSpec(objective="revenue")
    with pytest.raises(ValueError):
        SweepSpec(mechanisms=(), include_nonstrategic=False)
    assert SweepSpec().lambda_grid == (0.0, 0.1, 1.0, 10.0, 100.0)
    assert harness.DATASET_GRID == (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def test_noiseless_nonstrategic_cells_identical():
    inst = dataclasses.replace(build_synthetic_market("trend", **SMALL), noise=NoiseModel.none())
    vals = {run_cell(inst, 1.0, "nonstrategic", harness.noise_seed(0, k)).welfare for k in range(5)}
    assert len(vals) == 1


def test_zero_horizon_strategic_equals_nonstrategic():
    inst = build_synthetic_market("trend", **SMALL)
    for k in range(3):
        base = run_cell(inst, 0.1, "nonstrategic", harness.noise_seed(1, k))
        frozen = run_cell(inst, 0.1, "winner_value", harness.noise_seed(1, k),
                          harness.dynamics_seed(1, "winner_value", k), DynamicsConfig(horizon_T=0))
        assert frozen.welfare == base.welfare and frozen.nsw == base.nsw


def test_trend_market_nonstrategic_regularisation_helps():
    res = run_sweep(SweepSpec(lambda_grid=(0.0, 10.0), replicates=50, master_seed=3),
                    build_synthetic_market("trend", seed=3))
    means = {r["lambda"]: r["welfare_mean"] for r in res.aggregates()}
    assert means[10.0] >= means[0.0]


def test_cell_count_and_coordinates():
    spec = small_spec()
    res = run_sweep(spec, build_synthetic_market("trend", **SMALL))
    assert len(res.cells) == 3 * 3 * 3
    coords = {(c.lam, c.mode, c.replicate) for c in res.cells}
    assert len(coords) == 27
    assert {c.mode for c in res.cells} == {"nonstrategic", "exposure_topk", "softmax_share"}


def test_single_lambda_grid():
    res = run_sweep(small_spec(lambda_grid=(0.3,)), build_synthetic_market("niche", **SMALL))
    assert all(o["lambda_star"] == 0.3 for o in res.optima().values())


def test_rerun_and_worker_count_bitwise(tmp_path):
    spec = small_spec()
    builder = lambda: build_synthetic_market("trend", **SMALL)  # noqa: E731
    a = run_sweep(spec, builder, workers=1)
    b = run_sweep(spec, builder, workers=1)
    c = run_sweep(spec, builder, workers=2)
    pa = harness.write_cells(a.cells, tmp_path / "a.csv").read_bytes()
    assert pa == harness.write_cells(b.cells, tmp_path / "b.csv").read_bytes()
    assert pa == harness.write_cells(c.cells, tmp_path / "c.csv").read_bytes()


def test_noise_shared_across_modes_and_lambdas():
    # replicate k sees the same ratings in every cell, so non-strategic welfare at a
    # given lambda does not depend on which mechanisms are in the sweep
    builder = build_synthetic_market("trend", **SMALL)
    a = run_sweep(small_spec(mechanisms=()), builder)
    b = run_sweep(small_spec(), builder)
    key = lambda cells: {(c.lam, c.replicate): c.welfare for c in cells if c.mode == "nonstrategic"}  # noqa: E731
    assert key(a.cells) == key(b.cells)


def test_cell_errors_carry_coordinates(monkeypatch):
    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(harness, "run_cell", boom)
    with pytest.raises(CellError, match=r"lambda=0\.0 mode=nonstrategic replicate=0") as info:
        run_sweep(small_spec(), build_synthetic_market("trend", **SMALL))
    assert isinstance(info.value.__cause__, np.linalg.LinAlgError)


def test_export_round_trip(tmp_path):
    res = run_sweep(small_spec(), build_synthetic_market("trend", **SMALL))
    files = export_results(res, tmp_path)
    for name in ("cells.csv", "aggregates.csv", "optima.json", "spec.json", "welfare_curve.svg",
                 "welfare_curve.png", "plot_nonstrategic.csv", "plot_exposure_topk.csv"):
        assert (tmp_path / name).exists(), name
    assert files["cells"] == tmp_path / "cells.csv"
    cells = read_cells(tmp_path / "cells.csv")
    assert cells == res.cells
    assert aggregate_cells(cells, res.spec.modes) == res.aggregates()
    optima = json.loads((tmp_path / "optima.json").read_text())
    assert set(optima) == set(res.spec.modes)
    for row in optima.values():
        assert {"lambda_star", "welfare_mean", "welfare_stderr"} <= set(row)
    svg = (tmp_path / "welfare_curve.svg").read_text()
    assert len(re.findall(r'id="curve-[^"]+"', svg)) == 3
    lines = (tmp_path / "plot_softmax_share.csv").read_text().splitlines()
    assert lines[0] == "lambda,mean,stderr" and len(lines) == 4


def test_baseline_only_export_has_one_curve(tmp_path):
    res = run_sweep(small_spec(mechanisms=()), build_synthetic_market("trend", **SMALL))
    export_results(res, tmp_path)
    svg = (tmp_path / "welfare_curve.svg").read_text()
    assert re.findall(r'id="(curve-[^"]+)"', svg) == ["curve-nonstrategic"]


def test_export_to_unwritable_path(tmp_path):
    res = run_sweep(small_spec(mechanisms=(), lambda_grid=(1.0,), replicates=1),
                    build_synthetic_market("trend", **SMALL))
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        export_results(res, blocker / "sub")


def test_aggregate_means_exact():
    rng = np.random.default_rng(0)
    vals = rng.normal(1e6, 1.0, size=50)
    cells = [CellRecord(0.0, "x", k, float(v), 1.0) for k, v in enumerate(vals)]
    row = aggregate_cells(cells)[0]
    assert abs(row["welfare_mean"] - math.fsum(vals) / 50) <= 1e-12 * 1e6
    assert row["welfare_stderr"] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(50), rel=1e-10)


def test_optimum_ties_prefer_smallest_lambda():
    aggs = [{"lambda": lam, "mode": "m", "welfare_mean": w, "welfare_stderr": 0.0, "nsw_mean": 0,
             "nsw_stderr": 0} for lam, w in [(0.0, 1.0), (0.5, 2.0), (1.0, 2.0), (2.0, 1.5)]]
    assert optimal_lambdas(aggs)["m"]["lambda_star"] == 0.5


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=8),
       st.sampled_from([np.exp, np.arctan, lambda x: 3 * x + 1, np.cbrt]))
def test_optimum_invariant_under_increasing_transform(values, f):
    aggs = [{"lambda": float(k), "mode": "m", "welfare_mean": v, "welfare_stderr": 0.0}
            for k, v in enumerate(values)]
    moved = [dict(a, welfare_mean=float(f(a["welfare_mean"]))) for a in aggs]
    # strictly increasing maps keep strict order; ties may appear only through rounding
    if len(set(map(lambda a: a["welfare_mean"], moved))) == len(set(values)):
        assert optimal_lambdas(aggs)["m"]["lambda_star"] == optimal_lambdas(moved)["m"]["lambda_star"]


def test_nsw_objective():
    spec = small_spec(objective="nash_social_welfare", mechanisms=())
    res = run_sweep(spec, build_prent(PreNTParams(9, 1, 0.8, 0.6, 0.2)))
    rows = res.aggregates()
    best = max(rows, key=lambda r: (r["nsw_mean"], -r["lambda"]))
    assert res.optima()["nonstrategic"]["lambda_star"] == best["lambda"]
    assert res.optima()["nonstrategic"]["objective"] == "nash_social_welfare"
