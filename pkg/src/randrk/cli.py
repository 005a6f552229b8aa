"""Command-line front end: problem and method selection, experiment
execution, CSV output, and log-log plot emission.

Exit codes: 0 on success, 2 on flag or domain errors, 3 on numerical
aborts (non-finite values, singular collisions beyond the re-seed
policy) and I/O failures. Results go to ``--out`` as CSV; a human
summary is always printed.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from typing import Sequence

import numpy as np

from .core import (
    EvaluationError,
    NonFiniteStateError,
    ReseedLimitError,
    derive_stream,
    make_grid,
)
from .harness import (
    ConvergenceTable,
    ExperimentConfig,
    adversarial_demo,
    apriori_sup_bound,
    as_rate_check,
    error_constants,
    fit_order,
    run_convergence,
)
from .problems import (
    problem_adversarial_indicator,
    problem_jump_linear,
    problem_manufactured_hoelder,
    problem_singular_lipschitz,
    problem_singular_time,
)
from .quadrature import randomized_riemann
from .solvers import RANDOMIZED_METHODS, solve

__all__ = ["main", "write_csv", "emit_plot"]

PROBLEM_CHOICES = ("singular", "jump", "singular-lip", "manufactured", "adversarial")
METHOD_CHOICES = ("euler", "rand-euler", "rand-rk2")

_METHOD_IDS = {
    "euler": "classical_euler",
    "rand-euler": "rand_euler",
    "rand-rk2": "rand_rk2",
}

CSV_HEADER = ("problem", "method", "p", "h", "samples", "error", "stderr", "seed")


def _fmt(x: float) -> str:
    """Full double precision, decimal notation preserved by round trip."""
    return format(float(x), ".17g")


def write_csv(table: ConvergenceTable, path: str) -> None:
    """Write a convergence table with the fixed header and LF endings."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in table.rows:
            writer.writerow([
                table.problem,
                table.method,
                _fmt(table.p),
                _fmt(row.step),
                table.samples,
                _fmt(row.error),
                _fmt(row.sample_std),
                table.master_seed,
            ])


def emit_plot(csv_path: str, out_path: str) -> None:
    """Render a convergence CSV as a self-contained SVG.

    One polyline per (problem, method) group on axes n = -log2(h) versus
    log2(error), with fitted slopes in the legend. Requires at least two
    data rows with positive errors.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict[tuple[str, str], list[tuple[float, float]]] = {}
    try:
        with open(csv_path, newline="") as f:
            reader = csv.DictReader(f)
            n_rows = 0
            for record in reader:
                key = (record["problem"], record["method"])
                h = float(record["h"])
                err = float(record["error"])
                if h <= 0.0 or err <= 0.0:
                    raise ValueError(
                        f"row with nonpositive step or error: h={record['h']}, "
                        f"error={record['error']}"
                    )
                groups.setdefault(key, []).append((h, err))
                n_rows += 1
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed CSV {csv_path!r}: {exc}") from exc
    if n_rows < 2:
        raise ValueError(f"need at least 2 data rows to plot, got {n_rows}")

    fig, ax = plt.subplots(figsize=(7, 5))
    for (problem, method), points in sorted(groups.items()):
        points.sort(key=lambda hp: -hp[0])
        h = np.array([pt[0] for pt in points])
        err = np.array([pt[1] for pt in points])
        n_axis = -np.log2(h)
        label = f"{problem}/{method}"
        if h.size >= 2 and np.ptp(np.log2(h)) > 0.0:
            slope = float(np.polyfit(np.log2(h), np.log2(err), 1)[0])
            label += f" slope={slope:.2f}"
        ax.plot(n_axis, np.log2(err), marker="o", label=label)
    ax.set_xlabel("n (step size h = 2^-n)")
    ax.set_ylabel("log2 of L^p error")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def _add_problem_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--problem", choices=PROBLEM_CHOICES, required=True)
    sub.add_argument("--gamma", type=float, default=None,
                     help="singularity/Hoelder exponent for singular and manufactured")
    sub.add_argument("--alpha", type=float, default=None,
                     help="Lipschitz-weight exponent for singular-lip, in (0, 1/2)")
    sub.add_argument("--lambda", dest="lam", type=float, default=1.0,
                     help="state-coupling strength for manufactured")
    sub.add_argument("--T", type=float, default=1.0, help="final time")


def _add_experiment_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--method", choices=METHOD_CHOICES, required=True)
    sub.add_argument("--p", type=float, default=2.0)
    sub.add_argument("--samples", type=int, default=1000)
    sub.add_argument("--n-min", type=int, default=3)
    sub.add_argument("--n-max", type=int, default=12)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)


def _build_problem(args: argparse.Namespace, grid_step: float | None = None):
    """Return a Problem, or the grid-indexed provider for the adversarial one."""
    name = args.problem
    if name == "singular":
        if args.gamma is None:
            raise ValueError("problem 'singular' requires --gamma")
        return problem_singular_time(args.gamma, args.T)
    if name == "jump":
        return problem_jump_linear(args.T)
    if name == "singular-lip":
        if args.alpha is None:
            raise ValueError("problem 'singular-lip' requires --alpha")
        return problem_singular_lipschitz(args.alpha, args.T)
    if name == "manufactured":
        if args.gamma is None:
            raise ValueError("problem 'manufactured' requires --gamma")
        return problem_manufactured_hoelder(args.gamma, args.lam, args.T)
    if name == "adversarial":
        if grid_step is None:
            return problem_adversarial_indicator
        return problem_adversarial_indicator(make_grid(args.T, grid_step))
    raise ValueError(f"unknown problem {name!r}")


def _cmd_converge(args) -> int:
    problem = _build_problem(args)
    config = ExperimentConfig(
        problem=problem,
        method=_METHOD_IDS[args.method],
        p=args.p,
        samples=args.samples,
        n_min=args.n_min,
        n_max=args.n_max,
        master_seed=args.seed,
        threads=args.threads,
        horizon=args.T,
    )
    table = run_convergence(config)
    if args.out:
        write_csv(table, args.out)
    print(f"problem {table.problem!r}, method {table.method}, p={table.p:g}, "
          f"M={table.samples}, seed={table.master_seed}")
    for row in table.rows:
        n = -math.log2(row.step)
        print(f"  h=2^-{n:<2.0f} error={row.error:.6e} std={row.sample_std:.6e}")
    if len(table.rows) >= 3 and all(r.error > 0.0 for r in table.rows):
        fit = fit_order(table)
        print(f"fitted slope: {fit.slope:.4f} (intercept {fit.intercept:.3f}, "
              f"r^2 {fit.r_squared:.4f})")
    else:
        print("fitted slope: n/a (zero error rows)")
    if args.out:
        print(f"table written to {args.out}")
    return 0


def _cmd_quad(args) -> int:
    grid = make_grid(args.T, args.h)
    problem = _build_problem(args, grid_step=args.h)
    if problem.integrand is None:
        raise ValueError(
            f"problem {problem.name!r} is state-dependent; "
            "quad needs a state-independent right-hand side"
        )
    stream = derive_stream(args.seed, 0)
    prefix = randomized_riemann(problem.integrand, grid, stream)
    nodes = grid.nodes()[1:]
    print(f"randomized Riemann sum on {problem.name!r}: h={grid.step:g}, "
          f"steps={grid.n_steps}, seed={args.seed}")
    print(f"  Q[0,{nodes[-1]:g}] = {_fmt(prefix.final[0])}")
    if problem.exact is not None:
        truth = problem.exact_at_nodes(grid)[1:]
        dev = np.max(np.abs(truth[:, 0] - prefix.partials[:, 0]))
        print(f"  true integral = {_fmt(truth[-1, 0])}")
        print(f"  max prefix deviation = {dev:.6e}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["n", "t", "partial"])
            for j, (t, q) in enumerate(zip(nodes, prefix.partials[:, 0]), start=1):
                writer.writerow([j, _fmt(t), _fmt(q)])
        print(f"prefix sums written to {args.out}")
    return 0


def _cmd_solve(args) -> int:
    grid = make_grid(args.T, args.h)
    problem = _build_problem(args, grid_step=args.h)
    method = _METHOD_IDS[args.method]
    stream = None
    if method in RANDOMIZED_METHODS:
        stream = derive_stream(args.seed, 0)
    traj = solve(problem.field, problem.u0, grid, method, stream)
    print(f"{method} on {problem.name!r}: h={grid.step:g}, steps={grid.n_steps}")
    final = ", ".join(_fmt(v) for v in traj.final)
    print(f"  final state U({grid.node(grid.n_steps):g}) = [{final}]")
    if problem.exact is not None:
        from .harness import path_error_max

        print(f"  max node error = {path_error_max(traj, problem.exact):.6e}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            state_cols = [f"u{i}" for i in range(problem.dimension)]
            writer.writerow(["j", "t", *state_cols, "tau"])
            for j in range(grid.n_steps + 1):
                tau = "" if (traj.draws is None or j == 0) else _fmt(traj.draws[j - 1])
                writer.writerow([j, _fmt(grid.node(j)),
                                 *(_fmt(v) for v in traj.states[j]), tau])
        print(f"trajectory written to {args.out}")
    return 0


def _cmd_as_check(args) -> int:
    problem = _build_problem(args)
    config = ExperimentConfig(
        problem=problem,
        method=_METHOD_IDS[args.method],
        p=args.p,
        samples=args.samples,
        n_min=args.n_min,
        n_max=args.n_max,
        master_seed=args.seed,
        threads=args.threads,
        horizon=args.T,
    )
    exponent = 0.5 - 1.0 / args.p
    report = as_rate_check(config, exponent)
    print(f"pathwise rate check: exponent {exponent:g} "
          f"(1/2 - 1/p at p={args.p:g}), {report.n_paths} coupled paths")
    for n, thr, count in zip(report.levels, report.thresholds, report.violation_counts):
        print(f"  m={n:<3d} threshold={thr:.6e} violations={count}")
    frac = report.finest_violation_fraction
    print(f"violation fraction at finest level: {frac:.4f}")
    dist = report.distribution()
    pretty = ", ".join(f"{k}: {v}" for k, v in sorted(dist.items()))
    print(f"largest violating level per path (-1 = never): {{{pretty}}}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["level", "h", "threshold", "violations", "fraction"])
            for n, h, thr, count in zip(report.levels, report.steps,
                                        report.thresholds, report.violation_counts):
                writer.writerow([n, _fmt(h), _fmt(thr), count,
                                 _fmt(count / report.n_paths)])
        print(f"report written to {args.out}")
    return 0


def _cmd_adversarial(args) -> int:
    report = adversarial_demo(args.h, args.T, args.seed, args.samples)
    worst = float(np.max(report.randomized_errors))
    print(f"grid-indicator problem, h={report.step:g}, {args.samples} paths, "
          f"seed={args.seed}")
    print(f"classical euler error: {report.classical_error:g}")
    print(f"randomized euler error: {worst:g}")
    print(f"paths with error exactly zero: {report.n_exact_zero}/{args.samples}")
    print(f"re-seeded collisions: {report.n_reseeded}")
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["method", "h", "samples", "error", "zero_paths",
                             "reseeded", "seed"])
            writer.writerow(["classical_euler", _fmt(report.step), 1,
                             _fmt(report.classical_error), 0, 0, args.seed])
            writer.writerow(["rand_euler", _fmt(report.step), args.samples,
                             _fmt(worst), report.n_exact_zero,
                             report.n_reseeded, args.seed])
        print(f"report written to {args.out}")
    return 0


def _cmd_constants(args) -> int:
    if args.problem == "adversarial" and args.h is None:
        raise ValueError("problem 'adversarial' requires --h to fix its grid")
    problem = _build_problem(args, grid_step=args.h)
    meta = problem.field.regularity
    if meta.lipschitz_lp_norm is None or meta.growth_lp_norm is None:
        raise ValueError(
            f"problem {problem.name!r} declares no finite L^p norms at "
            f"p={meta.p_integrability:g}; constants unavailable"
        )
    sup_u = apriori_sup_bound(problem)
    report = error_constants(
        cp=args.cp,
        final_time=problem.final_time,
        p=meta.p_integrability,
        lipschitz_lp_norm=meta.lipschitz_lp_norm,
        growth_lp_norm=meta.growth_lp_norm,
        sup_u=sup_u,
        gamma=meta.hoelder_gamma,
        lipschitz_const=meta.lipschitz_const,
        hoelder_const=meta.hoelder_const,
    )
    print(f"error constants for {problem.name!r} (cp={args.cp:g}, "
          f"p={report.p:g}, sup|u| bound {sup_u:.6g})")
    rows = [("euler_integrable_rate_half", report.const_euler_integrable)]
    print(f"  C (randomized euler, order 1/2): {report.const_euler_integrable:.6g}")
    if report.const_euler_hoelder is not None:
        print(f"  C_U (randomized euler, order min(1/2+gamma, 1)): "
              f"{report.const_euler_hoelder:.6g}")
        print(f"  C_V (randomized rk2, order 1/2+gamma): "
              f"{report.const_rk2_hoelder:.6g}")
        rows.append(("euler_hoelder_rate", report.const_euler_hoelder))
        rows.append(("rk2_hoelder_rate", report.const_rk2_hoelder))
    if args.out:
        with open(args.out, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["name", "value", "cp", "p", "T", "lip_norm",
                             "growth_norm", "sup_u"])
            for name, value in rows:
                writer.writerow([name, _fmt(value), _fmt(args.cp), _fmt(report.p),
                                 _fmt(report.final_time),
                                 _fmt(report.lipschitz_lp_norm),
                                 _fmt(report.growth_lp_norm), _fmt(report.sup_u)])
        print(f"constants written to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    emit_plot(args.csv, args.out)
    print(f"plot written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randrk",
        description="Randomized one-step methods and quadrature for "
                    "time-irregular right-hand sides",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    converge = sub.add_parser("converge", help="Monte Carlo convergence study")
    _add_problem_flags(converge)
    _add_experiment_flags(converge)
    converge.add_argument("--out", default=None, help="CSV output path")
    converge.set_defaults(func=_cmd_converge)

    quad = sub.add_parser("quad", help="one randomized Riemann sum realization")
    _add_problem_flags(quad)
    quad.add_argument("--h", type=float, required=True)
    quad.add_argument("--seed", type=int, default=0)
    quad.add_argument("--out", default=None)
    quad.set_defaults(func=_cmd_quad)

    slv = sub.add_parser("solve", help="one trajectory of a one-step method")
    _add_problem_flags(slv)
    slv.add_argument("--method", choices=METHOD_CHOICES, required=True)
    slv.add_argument("--h", type=float, required=True)
    slv.add_argument("--seed", type=int, default=0)
    slv.add_argument("--out", default=None)
    slv.set_defaults(func=_cmd_solve)

    check = sub.add_parser("as-check",
                           help="pathwise rate check over coupled paths")
    _add_problem_flags(check)
    _add_experiment_flags(check)
    check.add_argument("--out", default=None)
    check.set_defaults(func=_cmd_as_check)

    adv = sub.add_parser("adversarial",
                         help="classical vs randomized Euler on the "
                              "grid-indicator field")
    adv.add_argument("--h", type=float, required=True)
    adv.add_argument("--T", type=float, default=1.0)
    adv.add_argument("--seed", type=int, default=0)
    adv.add_argument("--samples", type=int, default=1000)
    adv.add_argument("--out", default=None)
    adv.set_defaults(func=_cmd_adversarial)

    consts = sub.add_parser("constants",
                            help="closed-form error constants for a problem")
    _add_problem_flags(consts)
    consts.add_argument("--cp", type=float, default=10.0,
                        help="martingale maximal-inequality constant "
                             "(no numeric value is prescribed; diagnostic only)")
    consts.add_argument("--h", type=float, default=None,
                        help="grid step, only needed for the adversarial problem")
    consts.add_argument("--out", default=None)
    consts.set_defaults(func=_cmd_constants)

    plot = sub.add_parser("plot", help="render a convergence CSV as SVG")
    plot.add_argument("csv", help="input CSV from the converge subcommand")
    plot.add_argument("--out", required=True, help="SVG output path")
    plot.set_defaults(func=_cmd_plot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EvaluationError, NonFiniteStateError, ReseedLimitError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
