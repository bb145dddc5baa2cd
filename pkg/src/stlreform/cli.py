"""Command-line front end: ``stlreform {solve,compare,check,dump-tree,dump-nlp}``."""

from __future__ import annotations

import argparse
import logging
import statistics
import sys
from pathlib import Path

from . import __version__
from .assemble import assemble, assemble_smooth
from .checks import SUITES
from .formula import STLSyntaxError, UnsupportedNegation
from .io import RunConfig, write_report, write_trajectory_csv
from .pipeline import EXACT, SMOOTH, Prepared, initial_trajectory, run
from .reformulation import reformulate
from .scenarios import BUILTIN_NAMES, resolve_scenario
from .solver import SolverOptions
from .tree import count_nodes, dump_tree

EXIT_USAGE = 2


def _add_common(p: argparse.ArgumentParser, solver: bool = True):
    p.add_argument("--scenario", required=True,
                   help=f"builtin name ({', '.join(BUILTIN_NAMES)}) or path to a scenario JSON file")
    p.add_argument("--horizon", type=int, default=None, help="override the scenario horizon T")
    p.add_argument("--method", choices=["exact", "smooth-approx", "both"], default="exact")
    p.add_argument("--k", type=float, default=None,
                   help="smoothing parameter for smooth-approx (default: the scenario's choice)")
    if solver:
        d = SolverOptions()
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--init", choices=["reference", "zero", "random"], default="reference")
        p.add_argument("--scale", type=float, default=1.0, help="std of random initial guesses")
        p.add_argument("--out", default=None, help="directory for report.json and trajectory CSVs")
        p.add_argument("--kkt-tol", type=float, default=d.kkt_tol)
        p.add_argument("--feas-tol", type=float, default=d.feas_tol)
        p.add_argument("--max-outer", type=int, default=d.max_outer)
        p.add_argument("--timeout", type=float, default=d.timeout, help="seconds per solve")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stlreform", description="STL trajectory optimisation with an "
                                 "exact smooth reformulation of min/max robustness.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario and write a report")
    _add_common(p)

    p = sub.add_parser("compare", help="both methods over seeded random initial guesses")
    _add_common(p)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at --seed")
    p.set_defaults(init="random", method="both")

    p = sub.add_parser("check", help="run the property suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only these suites")

    p = sub.add_parser("dump-tree", help="print the (flattened) robustness tree")
    _add_common(p, solver=False)
    p.add_argument("--raw", action="store_true", help="do not flatten or deduplicate")

    p = sub.add_parser("dump-nlp", help="print the assembled NLP structure")
    _add_common(p, solver=False)
    p.add_argument("--constraints", action="store_true", help="also list every reformulation constraint")
    return ap


def _config(args) -> RunConfig:
    opts = SolverOptions(kkt_tol=args.kkt_tol, feas_tol=args.feas_tol, max_outer=args.max_outer,
                         timeout=args.timeout)
    return RunConfig(scenario=args.scenario, method=args.method, k=args.k, horizon=args.horizon,
                     seed=args.seed, init=args.init, scale=args.scale, out=args.out, solver=opts)


def _row(r) -> str:
    k = "" if r.k is None else f" k={r.k:g}"
    return (f"{r.method:<14} {r.status:<10} objective={r.objective:.6g} robustness={r.robustness:.6g} "
            f"time={r.solve_time:.2f}s iterations={r.iterations}{k}")


def cmd_solve(args) -> int:
    cfg = _config(args)
    sc = resolve_scenario(cfg.scenario, cfg.horizon)
    prep = Prepared.of(sc)
    init = initial_trajectory(sc, cfg.init, cfg.seed, cfg.scale)
    results = run(prep, cfg.method, init, cfg.k, cfg.solver)
    for r in results:
        print(_row(r))
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        states, inputs = sc.names()
        entries = []
        for r in results:
            name = f"trajectory_{r.method}.csv"
            write_trajectory_csv(out / name, r.trajectory, states, inputs)
            d = r.to_dict()
            d["trajectory_csv"] = name
            d["trajectory"] = {"states": r.trajectory.states, "inputs": r.trajectory.inputs}
            entries.append(d)
        write_report(out / "report.json", {
            "version": __version__, "command": "solve", "config": cfg.to_dict(),
            "scenario": sc.name, "T": sc.T, "results": entries,
        })
        print(f"wrote {out / 'report.json'}")
    return 0


def cmd_compare(args) -> int:
    if args.seeds < 1:
        print("error: --seeds must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    cfg = _config(args)
    sc = resolve_scenario(cfg.scenario, cfg.horizon)
    prep = Prepared.of(sc)
    rows = []
    for seed in range(cfg.seed, cfg.seed + args.seeds):
        init = initial_trajectory(sc, cfg.init, seed, cfg.scale)
        for r in run(prep, cfg.method, init, cfg.k, cfg.solver):
            rows.append((seed, r))
    rows.sort(key=lambda sr: (sr[0], sr[1].method))
    print(f"{'seed':>5} {'method':<14} {'status':<10} {'objective':>12} {'robustness':>12} {'time[s]':>8}")
    for seed, r in rows:
        print(f"{seed:>5} {r.method:<14} {r.status:<10} {r.objective:>12.6g} {r.robustness:>12.6g} "
              f"{r.solve_time:>8.2f}")
    summary = aggregate(rows)
    print()
    print(f"{'method':<14} {'best objective':>15} {'robustness':>11} {'median time[s]':>15} {'infeasible':>10}")
    for m, s in summary.items():
        best = "-" if s["best_objective"] is None else f"{s['best_objective']:.6g}"
        rob = "-" if s["best_robustness"] is None else f"{s['best_robustness']:.4g}"
        print(f"{m:<14} {best:>15} {rob:>11} {s['median_time']:>15.2f} {s['infeasible']:>6}/{s['runs']}")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_report(out / "compare.json", {
            "version": __version__, "command": "compare", "config": cfg.to_dict(), "seeds": args.seeds,
            "scenario": sc.name, "T": sc.T,
            "rows": [dict(seed=s, **r.to_dict()) for s, r in rows], "summary": summary,
        })
    return 0


def aggregate(rows) -> dict:
    """Best objective over successful runs, median solve time and failure count per method."""
    out = {}
    for m in (EXACT, SMOOTH):
        rs = [r for _, r in rows if r.method == m]
        if not rs:
            continue
        ok = [r for r in rs if r.success]
        best = min(ok, key=lambda r: r.objective) if ok else None
        out[m] = {
            "runs": len(rs),
            "best_objective": None if best is None else best.objective,
            "best_robustness": None if best is None else best.robustness,
            "median_time": statistics.median(r.solve_time for r in rs),
            "infeasible": sum(not r.success for r in rs),
        }
    return out


def cmd_check(args) -> int:
    names = args.suite or list(SUITES)
    ok = True
    for name in names:
        res = SUITES[name](seed=args.seed)
        print(res.line(), flush=True)
        ok &= res.passed
    return 0 if ok else 1


def cmd_dump_tree(args) -> int:
    sc = resolve_scenario(args.scenario, args.horizon)
    prep = Prepared.of(sc, simplify=not args.raw)
    print(f"# {sc.name}, T={sc.T}, {count_nodes(prep.tree)} nodes")
    print(dump_tree(prep.tree))
    return 0


def cmd_dump_nlp(args) -> int:
    sc = resolve_scenario(args.scenario, args.horizon)
    prep = Prepared.of(sc)
    if args.method == SMOOTH:
        k = args.k if args.k is not None else (sc.default_k() or 25.0)
        p = assemble_smooth(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, prep.compiled, k)
    else:
        reform = reformulate(prep.tree)
        p = assemble(sc.dynamics, sc.x0, sc.T, sc.weights, sc.boxes, reform)
        if args.constraints:
            print(reform.dump())
    print(f"# {sc.name}, T={sc.T}, method={p.meta['method']}")
    print(p.summary())
    return 0


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "check": cmd_check,
            "dump-tree": cmd_dump_tree, "dump-nlp": cmd_dump_nlp}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (STLSyntaxError, UnsupportedNegation, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
