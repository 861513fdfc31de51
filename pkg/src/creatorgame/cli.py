"""Command line entry point: ``creatorgame {theory,simulate,sweep,ingest,nmf}``.

Sweeps and single cells read a JSON config of the form::

    {"environment": {"kind": "trend", "m": 400, "seed": 0},
     "lambda_grid": [0, 0.1, 1, 10, 100], "mechanisms": ["exposure_topk"],
     "include_nonstrategic": true, "replicates": 50, "objective": "user_welfare",
     "dynamics": {"eta": 0.05, "horizon_T": 800}, "master_seed": 0, "K": 1}

Environment kinds: ``trend`` / ``niche`` (synthetic markets), ``prent``
(two-group game; takes N_T, N_N, theta_T, theta_N, E_bar) and ``dataset``
(takes ``factors``, a directory written by the ``nmf`` command, or
``ratings`` + ``format`` to ingest and factorise on the fly).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import envgen, harness, plotting, theory
from .core import GameInstance
from .dynamics import DynamicsConfig

log = logging.getLogger("creatorgame")

ENV_KINDS = ("trend", "niche", "prent", "dataset")


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_environment(env: dict, K: int, mechanism: str = "exposure_topk") -> GameInstance:
    env = dict(env)
    kind = env.pop("kind", "trend")
    seed = int(env.pop("seed", 0))
    if kind in ("trend", "niche"):
        return envgen.build_synthetic_market(kind, K=K, mechanism=mechanism, seed=seed, **env)
    if kind == "prent":
        p = theory.PreNTParams(**{k: env.pop(k) for k in ("N_T", "N_N", "theta_T", "theta_N",
                                                            "E_bar")})
        return envgen.build_prent(p, K=K, mechanism=mechanism, seed=seed)
    if kind == "dataset":
        if "factors" in env:
            factors = envgen.NmfFactors.load(env.pop("factors"))
        else:
            table = _ingest(env.pop("ratings"), env.pop("format", "movielens"))
            factors = envgen.factorize_nmf(table, d=int(env.pop("d", 16)),
                                           max_iter=int(env.pop("max_iter", 500)),
                                           seed=int(env.pop("nmf_seed", 0)))
        return envgen.build_dataset_instance(factors, K=K, mechanism=mechanism, seed=seed, **env)
    raise ValueError(f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")


def _ingest(path, fmt):
    if fmt == "movielens":
        return envgen.parse_movielens(path)
    if fmt == "amazon":
        return envgen.parse_amazon_5core(path)
    raise ValueError(f"unknown ratings format {fmt!r}")


def _load_config(args) -> dict:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.lambda_grid is not None:
        cfg["lambda_grid"] = _floats(args.lambda_grid)
    if args.mechanism:
        cfg["mechanisms"] = list(args.mechanism)
    if args.replicates is not None:
        cfg["replicates"] = args.replicates
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.k is not None:
        cfg["K"] = args.k
    if args.objective is not None:
        cfg["objective"] = args.objective
    if getattr(args, "horizon", None) is not None:
        cfg.setdefault("dynamics", {})["horizon_T"] = args.horizon
    return cfg


def _spec_from_config(cfg: dict) -> harness.SweepSpec:
    env_kind = cfg.get("environment", {}).get("kind", "trend")
    default_grid = harness.DATASET_GRID if env_kind == "dataset" else harness.SYNTHETIC_GRID
    dyn = dict(cfg.get("dynamics", {}))
    if env_kind == "dataset":
        dyn.setdefault("horizon_T", 1500)
    return harness.SweepSpec(
        lambda_grid=tuple(cfg.get("lambda_grid", default_grid)),
        mechanisms=tuple(cfg.get("mechanisms", ())),
        include_nonstrategic=cfg.get("include_nonstrategic", True),
        replicates=int(cfg.get("replicates", 50)),
        objective=cfg.get("objective", "user_welfare"),
        dynamics=DynamicsConfig(**dyn),
        master_seed=int(cfg.get("master_seed", 0)),
    )


# -- subcommands --------------------------------------------------------------

def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    inst = build_environment(cfg.get("environment", {"kind": "trend"}), int(cfg.get("K", 1)))
    result = harness.run_sweep(spec, inst, workers=args.workers, progress=True)
    files = harness.export_results(result, args.out, title=inst.label)
    for mode, row in result.optima().items():
        print(f"{mode}\tlambda*={row['lambda_star']!r}\twelfare={row['welfare_mean']:.6g}"
              f"\tstderr={row['welfare_stderr']:.3g}")
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    spec = _spec_from_config(cfg)
    lam = float(args.lam if args.lam is not None else spec.lambda_grid[0])
    mode = spec.modes[-1] if args.mode is None else args.mode
    inst = build_environment(cfg.get("environment", {"kind": "trend"}), int(cfg.get("K", 1)))
    rep = args.replicate
    out = harness.run_cell(inst, lam, mode, harness.noise_seed(spec.master_seed, rep),
                           harness.dynamics_seed(spec.master_seed, mode, rep), spec.dynamics,
                           record_trace=True)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "cell.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "mode", "replicate", "welfare", "nsw", "jittered"])
        w.writerow([repr(lam), mode, rep, repr(out.welfare), repr(out.nsw), int(out.jittered)])
    if out.trace is not None:
        out.trace.to_csv(outdir / "trace.csv")
        plotting.dynamics_figure(out.trace, outdir / "trace", title=f"{mode}, lambda={lam:g}")
    print(f"{mode}\tlambda={lam!r}\twelfare={out.welfare:.6g}\tnsw={out.nsw:.6g}")
    return 0


def cmd_theory(args) -> int:
    p = theory.PreNTParams(args.n_t, args.n_n, args.theta_t, args.theta_n, args.e_bar)
    rng = np.random.default_rng(args.seed)
    noise = theory.sample_group_noise(p, args.samples, rng)
    grid = _floats(args.lambda_grid) if args.lambda_grid else [0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0]
    rows = []
    for lam in grid:
        non = theory.expected_welfare_nonstrategic(lam, p, args.samples, rng, noise=noise)
        st = theory.expected_welfare_strategic(lam, p, args.samples, rng, noise=noise)
        g = theory.welfare_gradient_strategic(lam, p, args.samples, rng, noise=noise)
        rows.append([lam, float(theory.f_gap(lam, p)), theory.trend_probability(lam, p, noise),
                     non.mean, non.stderr, st.mean, st.stderr, g.mean, g.stderr])
    bounds = {}
    if p.theta_T > p.theta_N:
        bounds["lambda_non_lower"] = theory.lambda_non_lower(p)
    elif p.theta_T < p.theta_N:
        bounds["lambda_non_upper"] = theory.lambda_non_upper(p)
    bounds["lambda_str_upper"] = theory.lambda_str_upper(p, args.alpha)
    for k, v in bounds.items():
        print(f"# {k} = {v!r}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    header = ["lambda", "f_gap_zero_noise", "trend_probability", "nonstrategic_mean",
              "nonstrategic_stderr", "strategic_mean", "strategic_stderr", "gradient_mean",
              "gradient_stderr"]
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "theory.csv").open("w", newline="") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(header)
            cw.writerows([[repr(float(x)) for x in r] for r in rows])
        (out / "bounds.json").write_text(json.dumps(bounds, indent=2))
        curves = {"nonstrategic": (grid, [r[3] for r in rows], [r[4] for r in rows]),
                  "strategic": (grid, [r[5] for r in rows], [r[6] for r in rows])}
        plotting.welfare_curves(curves, out / "theory_welfare", ylabel="expected welfare")
    return 0


def cmd_ingest(args) -> int:
    table = _ingest(args.path, args.format)
    table.save_csv(args.out)
    print(f"users={table.n_users}\titems={table.n_items}\tratings={len(table)}")
    return 0


def cmd_nmf(args) -> int:
    src = Path(args.table)
    table = envgen.RatingTable.load_csv(src) if src.suffix == ".csv" else _ingest(src, args.format)
    f = envgen.factorize_nmf(table, d=args.d, max_iter=args.max_iter, tol=args.tol, seed=args.seed)
    f.save(args.out)
    print(f"error={f.error:.6g}\titerations={f.iterations}\tconverged={f.converged}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="creatorgame", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def sweep_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--lambda-grid", help="comma separated lambdas")
        p.add_argument("--mechanism", action="append", help="repeatable, e.g. softmax_share:10")
        p.add_argument("--replicates", type=int)
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--k", type=int, help="top-K slots")
        p.add_argument("--objective", choices=harness.OBJECTIVES)
        p.add_argument("--horizon", type=int, help="LBR rounds")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="lambda sweep with CSV/JSON/figure export")
    sweep_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="one cell with its dynamics trace")
    sweep_flags(p)
    p.add_argument("--lam", type=float)
    p.add_argument("--mode", help="nonstrategic or a mechanism name")
    p.add_argument("--replicate", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", help="two-group game bounds and Monte Carlo welfare table")
    p.add_argument("--n-t", type=int, default=9)
    p.add_argument("--n-n", type=int, default=1)
    p.add_argument("--theta-t", type=float, default=0.8)
    p.add_argument("--theta-n", type=float, default=0.6)
    p.add_argument("--e-bar", type=float, default=0.2)
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--lambda-grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("ingest", help="parse a ratings file into a dense-id CSV table")
    p.add_argument("path")
    p.add_argument("--format", choices=("movielens", "amazon"), default="movielens")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("nmf", help="factorise a ratings table")
    p.add_argument("table", help="CSV from `ingest`, or a raw ratings file")
    p.add_argument("--format", choices=("movielens", "amazon"), default="movielens")
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_nmf)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # report and exit nonzero, traceback only when verbose
        if args.verbose:
            log.exception("command failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
