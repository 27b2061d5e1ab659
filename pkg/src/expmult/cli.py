"""Command-line interface: solve, lp, bench and scan1d subcommands.

Exit codes are a stable contract:

    0  Converged (solve/lp/scan1d) or every bench entry passed
    1  bench failures
    2  ConvergedDivergingMultipliers
    3  MaxIterations
    4  NotCoercive or InnerFailure (and runtime evaluation failures)
    5  input errors: unknown flags, unreadable or malformed files

All numeric file output (trace CSV, scan CSV, report JSON) uses 17
significant digits, so identical invocations produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys

from .bench import dumps_report, run_suite
from .expressions import DomainError, ParseError, parse_problem_file
from .inner import InnerOptions
from .lp import LpStatus, load_lp_json, lp_vertex_oracle, solve_lp
from .outer import (
    OuterConfig,
    SolveReport,
    SolveStatus,
    scan_1d,
    scan_csv_text,
    solve,
    trace_csv_text,
)
from .problem import EqMode, EvaluationError, ProblemError, ProblemSpec, transform_equalities

_STATUS_EXIT = {
    SolveStatus.CONVERGED: 0,
    SolveStatus.CONVERGED_DIVERGING_MULTIPLIERS: 2,
    SolveStatus.MAX_ITERATIONS: 3,
    SolveStatus.NOT_COERCIVE: 4,
    SolveStatus.INNER_FAILURE: 4,
}

_EQ_MODES = {
    "square": EqMode.SQUARE_EACH,
    "aggregate": EqMode.SQUARE_AGGREGATE,
    "pair": EqMode.PAIR,
}


class CliInputError(Exception):
    """Any input problem: bad flags, bad files, bad file contents."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # reject unknown flags with the input-error code
        raise CliInputError(message)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _parse_vector(text: str, flag: str) -> float | list[float]:
    try:
        parts = [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise CliInputError(f"{flag}: {exc}") from exc
    if not parts:
        raise CliInputError(f"{flag}: empty value")
    return parts[0] if len(parts) == 1 else parts


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--tol-comp", type=float, default=None)
    sub.add_argument("--tol-feas", type=float, default=None)
    sub.add_argument("--max-outer", type=int, default=None)
    sub.add_argument("--y0", type=str, default=None)
    sub.add_argument("--x0", type=str, default=None)
    sub.add_argument("--omega", type=float, default=None)
    sub.add_argument("--y-cap", type=float, default=None)
    sub.add_argument("--y-flush", type=float, default=None)
    sub.add_argument("--flush-margin", type=float, default=None)
    sub.add_argument("--grad-tol", type=float, default=None)
    sub.add_argument("--inner-max-iters", type=int, default=None)
    sub.add_argument("--ls-shrink", type=float, default=None)
    sub.add_argument("--armijo-c", type=float, default=None)
    sub.add_argument("--exp-cap", type=float, default=None)
    sub.add_argument("--regularization", type=float, default=None)


def _build_config(args) -> tuple[OuterConfig, InnerOptions]:
    cfg_kwargs = {}
    for flag, attr in [
        ("tol_comp", "tol_comp"),
        ("tol_feas", "tol_feas"),
        ("max_outer", "max_outer"),
        ("omega", "omega"),
        ("y_cap", "y_cap"),
        ("y_flush", "y_flush"),
        ("flush_margin", "flush_feas_margin"),
    ]:
        value = getattr(args, flag)
        if value is not None:
            cfg_kwargs[attr] = value
    if args.y0 is not None:
        cfg_kwargs["y0"] = _parse_vector(args.y0, "--y0")
    if args.x0 is not None:
        cfg_kwargs["x0"] = _parse_vector(args.x0, "--x0")
    opts_kwargs = {}
    for flag, attr in [
        ("grad_tol", "grad_tol"),
        ("inner_max_iters", "max_iters"),
        ("ls_shrink", "ls_shrink"),
        ("armijo_c", "armijo_c"),
        ("exp_cap", "exp_cap"),
        ("regularization", "regularization"),
    ]:
        value = getattr(args, flag)
        if value is not None:
            opts_kwargs[attr] = value
    try:
        return OuterConfig(**cfg_kwargs), InnerOptions(**opts_kwargs)
    except ProblemError as exc:
        raise CliInputError(str(exc)) from exc


def _read_file(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliInputError(f"cannot read {path}: {exc}") from exc


def _report_dict(report: SolveReport, p: ProblemSpec) -> dict:
    return {
        "status": report.status.value,
        "objective": p.objective(report.x_star),
        "x_star": list(report.x_star),
        "y_star": list(report.y_star),
        "kkt": report.kkt.as_dict(),
        "outer_iters": report.outer_iters,
        "warnings": list(report.warnings),
    }


def _emit_outputs(report: SolveReport, p: ProblemSpec, args) -> None:
    if getattr(args, "json", None):
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(dumps_report(_report_dict(report, p)))
    if getattr(args, "trace", None):
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(trace_csv_text(report))


def _print_summary(report: SolveReport, p: ProblemSpec) -> None:
    print(f"status: {report.status.value}")
    print(f"objective: {_fmt(p.objective(report.x_star))}")
    print("x*: [" + ", ".join(_fmt(v) for v in report.x_star) + "]")
    print("y*: [" + ", ".join(_fmt(v) for v in report.y_star) + "]")
    k = report.kkt
    print(
        "kkt: stationarity="
        + _fmt(k.stationarity)
        + " feasibility="
        + _fmt(k.feasibility)
        + " complementarity="
        + _fmt(k.complementarity)
        + " dual_feasibility="
        + _fmt(k.dual_feasibility)
    )
    print(f"outer iterations: {report.outer_iters}")
    for w in report.warnings:
        print(f"warning: {w}")


def _cmd_solve(args) -> int:
    cfg, opts = _build_config(args)
    text = _read_file(args.file)
    source = parse_problem_file(text)
    p = transform_equalities(source.to_problem_spec(), _EQ_MODES[args.eq_mode])
    report = solve(p, cfg, opts)
    _print_summary(report, p)
    _emit_outputs(report, p, args)
    return _STATUS_EXIT[report.status]


def _cmd_lp(args) -> int:
    cfg, opts = _build_config(args)
    lp = load_lp_json(_read_file(args.file))
    report = solve_lp(lp, cfg, opts, cross_check=not args.no_oracle)
    from .lp import build_lp_problem

    p = build_lp_problem(lp)
    _print_summary(report, p)
    if not args.no_oracle and lp.dim <= 8 and lp.n_rows <= 16:
        oracle = lp_vertex_oracle(lp)
        if oracle.status is LpStatus.OPTIMAL:
            print(f"oracle: Optimal, objective {_fmt(oracle.obj)}")
        else:
            print(f"oracle: {oracle.status.value}")
    _emit_outputs(report, p, args)
    return _STATUS_EXIT[report.status]


def _cmd_scan1d(args) -> int:
    cfg, opts = _build_config(args)
    text = _read_file(args.file)
    source = parse_problem_file(text)
    p = transform_equalities(source.to_problem_spec(), _EQ_MODES[args.eq_mode])
    if p.n_ineq != 1:
        raise CliInputError(
            f"scan1d needs exactly one inequality constraint, found {p.n_ineq}"
        )
    table = scan_1d(p, args.y_min, args.y_max, args.steps, cfg, opts)
    csv_text = scan_csv_text(table)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    if not table.complete:
        print("warning: scan aborted early (inner solve failed)", file=sys.stderr)
        return 4
    return 0


def _cmd_bench(args) -> int:
    report = run_suite(jobs=args.jobs)
    for entry in report.entries:
        flag = "PASS" if entry["passed"] else "FAIL"
        line = f"{flag} {entry['id']}: status {entry['status']}"
        if entry["obj_err"] is not None:
            line += f", obj_err {entry['obj_err']:.3e}, x_err {entry['x_err']:.3e}"
        line += f", {entry['outer_iters']} outer iters"
        print(line)
        for reason in entry["reasons"]:
            print(f"     - {reason}")
    print(f"summary: {report.summary['pass']} pass, {report.summary['fail']} fail")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(dumps_report(report.to_dict()))
    return 0 if report.passed() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="expmult", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", required=True)

    p_solve = subparsers.add_parser("solve", help="solve a problem file")
    p_solve.add_argument("file")
    p_solve.add_argument("--eq-mode", choices=sorted(_EQ_MODES), default="square")
    p_solve.add_argument("--json", type=str, default=None, help="write report JSON")
    p_solve.add_argument("--trace", type=str, default=None, help="write trace CSV")
    _add_config_flags(p_solve)

    p_lp = subparsers.add_parser("lp", help="solve an LP from a JSON file")
    p_lp.add_argument("file")
    p_lp.add_argument("--json", type=str, default=None)
    p_lp.add_argument("--trace", type=str, default=None)
    p_lp.add_argument("--no-oracle", action="store_true")
    _add_config_flags(p_lp)

    p_scan = subparsers.add_parser(
        "scan1d", help="tabulate y, x(y), g(x(y)), G(y) for a 1-constraint problem"
    )
    p_scan.add_argument("file")
    p_scan.add_argument("--eq-mode", choices=sorted(_EQ_MODES), default="square")
    p_scan.add_argument("--y-min", type=float, required=True)
    p_scan.add_argument("--y-max", type=float, required=True)
    p_scan.add_argument("--steps", type=int, required=True)
    p_scan.add_argument("--out", type=str, default=None, help="write CSV here")
    _add_config_flags(p_scan)

    p_bench = subparsers.add_parser("bench", help="run the built-in corpus")
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.add_argument("--json", type=str, default=None)

    return parser


_COMMANDS = {
    "solve": _cmd_solve,
    "lp": _cmd_lp,
    "scan1d": _cmd_scan1d,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (DomainError, EvaluationError) as exc:
        # Runtime evaluation failures rank as solver failures, not bad input.
        print(f"evaluation error: {exc}", file=sys.stderr)
        return 4
    except CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except (ParseError, ProblemError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
