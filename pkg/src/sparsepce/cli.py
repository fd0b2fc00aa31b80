"""Command-line interface: ``sparsepce <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .basis import build_basis
from .bench import cdf_study, load_config, run_experiment, write_cdf_outputs, write_outputs
from .design import rrqr_select, subset_select
from .models import get_model
from .sampling import RngStream, read_pool_csv, sample_pool, write_pool_csv
from .solvers import CandidateOracle, cross_validate_k, dsp, dsp_cv, subspace_pursuit


def _cmd_sample(args) -> int:
    spec = build_basis(args.family, args.d, args.p)
    pool = sample_pool(spec, args.M, args.strategy, RngStream(args.seed, args.stream))
    write_pool_csv(pool, args.out)
    return 0


def _read_indices(path) -> list[int]:
    return [int(line) - 1 for line in Path(path).read_text().split() if line.strip()]


def _cmd_design(args) -> int:
    pool = read_pool_csv(args.pool)
    select = rrqr_select if args.method == "rrqr" else subset_select
    design = select(pool.matrix, args.N)
    Path(args.out).write_text("".join(f"{i + 1}\n" for i in design.pi))
    return 0


def _cmd_solve(args) -> int:
    pool = read_pool_csv(args.pool)
    model = get_model(args.model)
    if model.d != pool.spec.d:
        raise SystemExit(f"model {args.model} takes {model.d} inputs but the pool has d={pool.spec.d}")
    oracle = CandidateOracle(pool.points, pool.weights, fn=model.fn)
    phi_c = pool.matrix
    gen = RngStream(args.seed, 0).generator()
    auto_k = args.K == "auto"
    design = None
    if args.method == "sp":
        if args.design_file:
            idx = np.asarray(_read_indices(args.design_file), dtype=int)
        else:
            idx = rrqr_select(phi_c, args.N).indices
        v = oracle.evaluate(idx)
        K = cross_validate_k(phi_c[idx], v, rng=gen) if auto_k else int(args.K)
        sol = subspace_pursuit(K, phi_c[idx], v)
        sol.n_model_evals = oracle.n_evals
        design = [int(i) + 1 for i in idx]
    elif args.method == "dsp":
        if auto_k:
            raise SystemExit("--method dsp needs an integer --K; use dsp-cv for automatic K")
        sol = dsp(int(args.K), phi_c, args.N, oracle)
    else:
        sol = dsp_cv(phi_c, args.N, oracle, rng=gen)
    if sol.design is not None:
        design = [i + 1 for i in sol.design.pi]
    nz = np.flatnonzero(sol.coeffs)
    out = {
        "coeffs": [[int(i), float(sol.coeffs[i])] for i in nz],
        "P": int(pool.spec.P),
        "support": [int(i) for i in sol.support],
        "k_used": int(sol.k_used),
        "n_model_evals": int(sol.n_model_evals),
        "residual_history": [float(r) for r in sol.residual_history],
        "design": design,
    }
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    return 0


def _cmd_model_eval(args) -> int:
    model = get_model(args.model)
    if args.point is not None:
        x = np.array([float(t) for t in args.point.split(",")])
        print(f"{model.fn(x):.17g}")
    else:
        pts = np.loadtxt(args.points, delimiter=",", comments="#", ndmin=2)
        for row in pts:
            print(f"{model.fn(row):.17g}")
    return 0


def _cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.out:
        config.output_dir = args.out
    records = run_experiment(config)
    rows = write_outputs(config, records)
    for row in rows:
        print(f"{row['strategy']:>14} N={row['N']:<5d} mean={row['mean_rel_err']:.4e} std={row['std_rel_err']:.4e}")
    return 0


def _cmd_cdf(args) -> int:
    study = cdf_study(args.family, args.d, args.p, args.N, args.M, args.n_designs, seed=args.seed)
    write_cdf_outputs(study, args.out)
    print(f"coherence CDF at or below standard at {100 * study.dominance_fraction:.1f}% of grid; "
          f"strict dominance: {study.dominates}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsepce", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a candidate pool")
    p.add_argument("--family", required=True, choices=["legendre", "hermite"])
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--strategy", default="coherence", choices=["standard", "coherence"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("design", help="select a D-optimal design from a pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--method", default="rrqr", choices=["rrqr", "subset"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("solve", help="fit a sparse PC surrogate of a model")
    p.add_argument("--pool", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--method", default="dsp-cv", choices=["sp", "dsp", "dsp-cv"])
    p.add_argument("--K", default="auto")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--design-file", help="1-based design indices for --method sp (default: RRQR design)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("model", help="benchmark models")
    msub = p.add_subparsers(dest="model_command", required=True)
    e = msub.add_parser("eval", help="evaluate a model at a point or a CSV of points")
    e.add_argument("--model", required=True)
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--point")
    g.add_argument("--points")
    e.set_defaults(func=_cmd_model_eval)

    p = sub.add_parser("bench", help="run a strategy-comparison experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("cdf-study", help="CDFs of design quality for both sampling strategies")
    p.add_argument("--family", required=True, choices=["legendre", "hermite"])
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--n-designs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=_cmd_cdf)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
