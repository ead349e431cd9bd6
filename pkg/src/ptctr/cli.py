"""Command-line entry point: ``ptctr {bench,solve,vin,conditioning}``.

Exit codes: 0 success, 1 convergence failure, 2 usage error.
"""

import argparse
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import problems as P
from .baselines import (FlowConfig, PenaltyConfig, gradient_flow_solve, penalty_conditioning,
                        penalty_solve)
from .reports import (BenchRow, RunManifest, bench_document, conditioning_document, utc_now,
                      vin_document, write_bench_csv, write_conditioning_csv, write_json)
from .solver import SolverConfig, Status, solve
from .vin import NoiseModel, VinParams, simulate

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
SOLVER_NAMES = ("ptctr", "penalty", "flow")
WORKERS_ENV = "PTCTR_WORKERS"
CONDITIONING_PROBLEMS = (1, 3)


class UsageError(Exception):
    pass


def _as_usage(fn):
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    wrapper.__name__, wrapper.__doc__ = fn.__name__, fn.__doc__
    return wrapper


@_as_usage
def parse_problem_list(text):
    """``"ex1..ex10"``, ``"ex1,ex3"`` or a mix -> list of example ids (in order)."""
    ids = []
    for part in (p.strip() for p in str(text).split(",")):
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            a, b = P.parse_problem_id(lo), P.parse_problem_id(hi)
            if a > b:
                raise ValueError(f"empty problem range {part!r}")
            ids.extend(range(a, b + 1))
        else:
            ids.append(P.parse_problem_id(part))
    if not ids:
        raise ValueError("empty problem list")
    return ids


@_as_usage
def parse_solvers(text):
    names = [s.strip() for s in str(text).split(",") if s.strip()]
    if not names:
        raise ValueError("empty solver list")
    for s in names:
        if s not in SOLVER_NAMES:
            raise ValueError(f"unknown solver {s!r}; expected one of {', '.join(SOLVER_NAMES)}")
    return names


@_as_usage
def parse_floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _solver_config(args):
    return SolverConfig(max_iterations=args.max_iterations)


def run_one(example, n, solver, max_iterations=500):
    """Solve one benchmark with one solver; returns ``(BenchRow, report)``."""
    problem = P.make_example(example, n)
    if solver == "ptctr":
        report = solve(problem, SolverConfig(max_iterations=max_iterations))
    elif solver == "penalty":
        report = penalty_solve(problem, PenaltyConfig())
    else:
        report = gradient_flow_solve(problem, FlowConfig())
    return BenchRow.from_report(report, problem.n, problem.m), report


def _bench_job(job):
    row, _ = run_one(*job)
    return row


def _row_ok(row, example):
    if row.status == Status.CONVERGED.value:
        return True
    return row.solver == "penalty" and row.close and example in P.REFERENCE_PENALTY_CLOSE


def _dimensions(ids, args):
    if args.n is not None:
        return {k: args.n for k in ids}
    return {k: P.dimension_for(k, args.n_scale) for k in ids}


def cmd_bench(args):
    ids = parse_problem_list(args.problems)
    solvers = parse_solvers(args.solver)
    dims = _dimensions(ids, args)
    for k, n in dims.items():
        if n < P.divisor(k) or n % P.divisor(k):
            raise UsageError(f"ex{k} needs n to be a multiple of {P.divisor(k)}, got {n}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command="bench", argv=list(args.argv), problems=[f"ex{k}" for k in ids],
        dimensions={f"ex{k}": n for k, n in dims.items()}, solvers=solvers,
        config={"ptctr": _solver_config(args).to_dict(), "penalty": PenaltyConfig().to_dict(),
                "flow": FlowConfig().to_dict(), "workers": _worker_count()},
        outputs={"csv": str(out / "bench.csv"), "json": str(out / "bench.json")})

    jobs = [(k, dims[k], s, args.max_iterations) for k in ids for s in solvers]
    workers = _worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_bench_job, jobs))
    else:
        rows = [_bench_job(j) for j in jobs]

    manifest.finished = utc_now()
    write_bench_csv(rows, out / "bench.csv")
    write_json(bench_document(rows, manifest), out / "bench.json")
    ok = True
    for (k, *_), row in zip(jobs, rows):
        flag = " (close)" if row.close else ""
        print(f"{row.problem:>5} n={row.n:<5} {row.solver:<8} {row.status:<16}{flag:8} "
              f"f*={row.f_star:.9e} steps={row.steps} kkt={row.kkt_residual:.2e} "
              f"feas={row.feasibility_residual:.2e} t={row.elapsed_seconds:.2f}s")
        ok &= _row_ok(row, k)
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_solve(args):
    k = _as_usage(P.parse_problem_id)(args.problem)
    n = args.n if args.n is not None else P.dimension_for(k, args.n_scale)
    if n < P.divisor(k) or n % P.divisor(k):
        raise UsageError(f"ex{k} needs n to be a multiple of {P.divisor(k)}, got {n}")
    solver = parse_solvers(args.solver)
    if len(solver) != 1:
        raise UsageError("solve takes exactly one solver")
    row, report = run_one(k, n, solver[0], args.max_iterations)
    print(f"problem   ex{k} (n={row.n}, m={row.m}, rank={report.rank})")
    print(f"solver    {row.solver}")
    print(f"status    {row.status}{' (close)' if row.close else ''}")
    print(f"f_star    {row.f_star:.9e}")
    print(f"kkt       {row.kkt_residual:.3e}")
    print(f"feas      {row.feasibility_residual:.3e}")
    print(f"steps     {row.steps} (accepted {row.accepted}, rejected {row.rejected})")
    print(f"time      {row.elapsed_seconds:.3f}s")
    if report.message:
        print(f"note      {report.message}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            command="solve", argv=list(args.argv), problems=[f"ex{k}"],
            dimensions={f"ex{k}": n}, solvers=solver,
            config={"ptctr": _solver_config(args).to_dict()},
            outputs={"json": str(out / f"solve_ex{k}.json")}, finished=utc_now())
        write_json(bench_document([row], manifest), out / f"solve_ex{k}.json")
    return EXIT_OK if _row_ok(row, k) else EXIT_FAILURE


def cmd_vin(args):
    solver = {"flow": "gradient_flow"}.get(args.solver, args.solver)
    try:
        params = VinParams(frames=args.frames, epsilon=args.epsilon,
                           rank_threshold=args.rank_threshold)
        noise = None
        if args.noise == "on":
            noise = NoiseModel(angle_halfwidth=args.angle_noise, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"vin_trj{args.trajectory}"
    manifest = RunManifest(
        command="vin", argv=list(args.argv), solvers=[args.solver],
        config={"trajectory": args.trajectory, "noise": args.noise,
                "params": vars(params) | {"dist_hor": params.dist_hor},
                "noise_model": vars(noise) if noise else None},
        seed=args.seed if noise else None,
        outputs={"csv": str(out / f"{stem}.csv"), "json": str(out / f"{stem}.json")})
    est = simulate(args.trajectory, params, noise, solver)
    manifest.finished = utc_now()
    est.to_csv(out / f"{stem}.csv")
    summary = est.summary()
    write_json(vin_document(summary, manifest), out / f"{stem}.json")
    print(f"trajectory {args.trajectory}: {summary['frames_solved']} frames, "
          f"max error {summary['max_error']:.6e} m, mean {summary['mean_error']:.6e} m, "
          f"rank {summary['rank_min']}..{summary['rank_max']}, "
          f"statuses {summary['status_counts']}, {summary['total_time']:.2f}s")
    failed = summary["status_counts"].get(Status.NUMERICAL_FAILURE.value, 0)
    return EXIT_OK if failed == 0 and summary["all_feasible"] else EXIT_FAILURE


def cmd_conditioning(args):
    k = _as_usage(P.parse_problem_id)(args.problem)
    if k not in CONDITIONING_PROBLEMS:
        raise UsageError(f"conditioning supports ex1 and ex3 only, got ex{k}")
    n = args.n if args.n is not None else 2 * P.divisor(k)
    if n % P.divisor(k):
        raise UsageError(f"ex{k} needs n to be a multiple of {P.divisor(k)}, got {n}")
    sigmas = parse_floats(args.sigmas)
    if not sigmas:
        raise UsageError("empty sigma list")
    if any(s < 0 for s in sigmas):
        raise UsageError("sigma values must be nonnegative")
    pairs = penalty_conditioning(P.make_example(k, n), sigmas)
    monotone = None
    if sigmas == sorted(sigmas):
        conds = [c for s, c in pairs if s >= 1.0]
        monotone = all(b >= a for a, b in zip(conds, conds[1:]))
    else:
        warnings.warn("sigma list is not sorted; monotonicity check skipped", stacklevel=1)
    print("sigma,condition")
    for s, c in pairs:
        print(f"{s:.9e},{c:.9e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            command="conditioning", argv=list(args.argv), problems=[f"ex{k}"],
            dimensions={f"ex{k}": n}, solvers=["penalty"], config={"sigmas": sigmas},
            outputs={"csv": str(out / f"conditioning_ex{k}.csv"),
                     "json": str(out / f"conditioning_ex{k}.json")}, finished=utc_now())
        write_conditioning_csv(pairs, out / f"conditioning_ex{k}.csv")
        write_json(conditioning_document(pairs, manifest, monotone),
                   out / f"conditioning_ex{k}.json")
    if monotone is False:
        print("warning: condition numbers are not monotone for sigma >= 1", file=sys.stderr)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ptctr",
        description="Continuation solver with trust-region time-stepping for "
                    "linearly equality-constrained optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dims(p):
        group = p.add_mutually_exclusive_group()
        group.add_argument("--n", type=int, default=None, help="dimension for every problem")
        group.add_argument("--n-scale", choices=sorted(P.PRESETS), default="paper1000",
                           help="per-problem dimension preset (default paper1000)")

    b = sub.add_parser("bench", help="run benchmark problems with one or more solvers")
    b.add_argument("--problems", required=True, help='e.g. "ex1..ex10" or "ex1,ex3"')
    add_dims(b)
    b.add_argument("--solver", default="ptctr", help="comma list of ptctr, penalty, flow")
    b.add_argument("--out", default="results", help="output directory")
    b.add_argument("--max-iterations", type=int, default=500)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("solve", help="solve a single benchmark problem")
    s.add_argument("--problem", required=True)
    add_dims(s)
    s.add_argument("--solver", default="ptctr")
    s.add_argument("--out", default=None)
    s.add_argument("--max-iterations", type=int, default=500)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("vin", help="visual-inertial localization simulation")
    v.add_argument("--trajectory", type=int, choices=(1, 2, 3), required=True)
    v.add_argument("--frames", type=int, default=7200)
    v.add_argument("--noise", choices=("on", "off"), default="off")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--solver", choices=SOLVER_NAMES, default="ptctr")
    v.add_argument("--angle-noise", type=float, default=0.2,
                   help="half-width of the line-of-sight angle noise (rad)")
    v.add_argument("--rank-threshold", type=float, default=1e-10)
    v.add_argument("--epsilon", type=float, default=1e-8, help="per-frame KKT tolerance")
    v.add_argument("--out", default="results")
    v.set_defaults(func=cmd_vin)

    c = sub.add_parser("conditioning", help="condition number of the penalty Hessian")
    c.add_argument("--problem", default="ex1")
    c.add_argument("--n", type=int, default=None)
    c.add_argument("--sigmas", default=",".join(f"1e{i}" for i in range(7)))
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_conditioning)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
