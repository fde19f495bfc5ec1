"""Batch command line interface.

Subcommands:

* ``run``      -- full pipeline: data, path fit, model averaging, bootstrap,
                  optional gate-sensitivity and benchmark stages.
* ``simulate`` -- write a synthetic triangle and its truth sidecar.
* ``fit``      -- primary stage only, from a triangle CSV.
* ``report``   -- recompute decomposition tables from a finished run
                  directory's stored bootstrap matrices.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import RunConfig, spec_from_file, spec_to_dict, stream_int, STREAM_SIM
from .pipeline import emit_truth, report_from_dir, run_all
from .simulate import dataset_spec, simulate
from .triangle import write_triangle_csv


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", help="stock scenario name (dataset1..dataset4)")
    p.add_argument("--spec", dest="spec_file", help="simulation spec JSON file")
    p.add_argument("--size", type=int, default=40, help="triangle side I")
    p.add_argument("--seed", type=int, default=1, help="root seed")


def _add_fit_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--path-points", type=int, default=100, help="number of path penalties Q")
    p.add_argument("--path-ratio", type=float, default=1e-4, help="smallest/largest penalty ratio")
    p.add_argument("--folds", type=int, default=8, help="cross-validation folds")
    p.add_argument("--epsilon", type=float, default=0.0005, help="tail mass for extreme priors")
    p.add_argument("--flavors", default="simple,1se,mincv,complex",
                   help="comma-separated prior flavors")
    p.add_argument("--gates", dest="gates_file", help="gate bounds JSON file")
    p.add_argument("--out", dest="out_dir", default="run_output", help="output directory")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: RESERVE_LASSO_WORKERS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reserve-lasso",
        description="Loss-reserve forecast error estimation over a penalized regression path",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline")
    _add_data_args(p_run)
    p_run.add_argument("--triangle", dest="triangle_file", help="observed triangle CSV")
    _add_fit_args(p_run)
    p_run.add_argument("--bootstrap", type=int, default=200, dest="bootstrap_b",
                       help="bootstrap replications B (0 disables the stage)")
    p_run.add_argument("--process-sims", type=int, default=20000,
                       help="process-error simulation count")
    p_run.add_argument("--widen", type=float, default=None, dest="widen_factor",
                       help="also run with gates widened by this factor")
    p_run.add_argument("--benchmark", action="store_true",
                       help="also bootstrap the known-structure benchmark regression")

    p_sim = sub.add_parser("simulate", help="write a synthetic triangle")
    _add_data_args(p_sim)
    p_sim.add_argument("--out", dest="out_dir", default="run_output", help="output directory")

    p_fit = sub.add_parser("fit", help="primary stage from a triangle CSV")
    p_fit.add_argument("--triangle", dest="triangle_file", required=True)
    p_fit.add_argument("--seed", type=int, default=1)
    _add_fit_args(p_fit)

    p_rep = sub.add_parser("report", help="recompute tables from a run directory")
    p_rep.add_argument("--run-dir", required=True)
    p_rep.add_argument("--out", dest="out_dir", default=None)
    return parser


def _config_from_args(args: argparse.Namespace, require_data: bool = True) -> RunConfig:
    triangle_file = getattr(args, "triangle_file", None)
    side = getattr(args, "size", 40)
    return RunConfig(
        dataset=getattr(args, "dataset", None),
        spec_file=getattr(args, "spec_file", None),
        triangle_file=triangle_file,
        side=side,
        seed=args.seed,
        q_count=args.path_points,
        path_ratio=args.path_ratio,
        folds=args.folds,
        epsilon=args.epsilon,
        gates_file=args.gates_file,
        widen_factor=getattr(args, "widen_factor", None),
        bootstrap_b=getattr(args, "bootstrap_b", 0),
        flavors=tuple(f.strip() for f in args.flavors.split(",") if f.strip()),
        process_sims=getattr(args, "process_sims", 20000),
        benchmark=getattr(args, "benchmark", False),
        out_dir=args.out_dir,
        workers=args.workers,
    )


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    manifest = run_all(config)
    print(f"run complete; artifacts in {config.out_dir}")
    print(f"phi={manifest['phi']:.6g} q_1se={manifest['q_1se']} q_min={manifest['q_min']}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    if bool(args.dataset) == bool(args.spec_file):
        raise ValueError("simulate needs exactly one of --dataset or --spec")
    if args.dataset:
        spec = dataset_spec(args.dataset, args.size)
    else:
        spec = spec_from_file(args.spec_file)
    sim = simulate(spec, stream_int(args.seed, STREAM_SIM))
    os.makedirs(args.out_dir, exist_ok=True)
    write_triangle_csv(sim.triangle, os.path.join(args.out_dir, "triangle.csv"))
    emit_truth(sim, spec, args.out_dir)
    with open(os.path.join(args.out_dir, "spec.json"), "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
    print(f"simulated {spec.I}x{spec.I} triangle; true reserve {sim.true_reserve:.6g}")
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    args_size = 40  # side is taken from the triangle file itself
    config = RunConfig(
        triangle_file=args.triangle_file,
        side=max(4, args_size),
        seed=args.seed,
        q_count=args.path_points,
        path_ratio=args.path_ratio,
        folds=args.folds,
        epsilon=args.epsilon,
        gates_file=args.gates_file,
        bootstrap_b=0,
        flavors=tuple(f.strip() for f in args.flavors.split(",") if f.strip()),
        out_dir=args.out_dir,
        workers=args.workers,
    )
    manifest = run_all(config)
    print(f"fit complete; artifacts in {config.out_dir}")
    print(f"phi={manifest['phi']:.6g} q_1se={manifest['q_1se']} q_min={manifest['q_min']}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    report_from_dir(args.run_dir, args.out_dir)
    print(f"tables rewritten from {args.run_dir}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except Exception as err:  # surface stage-tagged diagnostics, not tracebacks
        print(f"[{args.command}] error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
