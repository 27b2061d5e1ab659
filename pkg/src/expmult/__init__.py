"""Constrained nonlinear programming by exponential multiplier fixed points.

The method solves "minimize f(x) subject to g(x) <= 0" by repeatedly
minimizing the unconstrained master function
L(x, y) = f(x) + sum_k exp(y_k g_k(x)) over x and rescaling each multiplier
by exp(y_k g_k(x)).  Optimal multipliers are fixed points of that rescaling
map; at a fixed point complementary slackness holds and x is a local
solution of the constrained program.
"""

from .problem import (
    EqMode,
    EvaluationError,
    KktResidual,
    ProblemError,
    ProblemSpec,
    ScalarFunction,
    eval_constraints,
    kkt_residual,
    transform_equalities,
)
from .expressions import (
    BinOp,
    Call,
    Const,
    DomainError,
    Expr,
    ParseError,
    Power,
    ProblemSource,
    Var,
    eval_expr,
    expr_to_str,
    grad_expr,
    parse_expression,
    parse_problem_file,
)
from .inner import (
    InnerOptions,
    InnerResult,
    InnerStatus,
    MasterEval,
    inner_minimize,
    master_eval,
    safe_exp,
    safe_exp_deriv,
)
from .outer import (
    NotCoerciveError,
    OuterConfig,
    ProbeReport,
    ScanTable,
    SolveReport,
    SolveStatus,
    TracePoint,
    classify_termination,
    map_G,
    multiplier_update,
    scan_1d,
    scan_csv_text,
    solve,
    trace_csv_text,
    well_balanced_probe,
    write_scan_csv,
    write_trace_csv,
)
from .lp import (
    LpData,
    LpOracleResult,
    LpStatus,
    build_lp_problem,
    load_lp_json,
    lp_vertex_oracle,
    random_bounded_lp,
    solve_lp,
)
from .bench import (
    BenchReport,
    CorpusEntry,
    Reference,
    builtin_corpus,
    compare_to_reference,
    dumps_report,
    run_suite,
    validate_corpus,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "BinOp",
    "Call",
    "Const",
    "CorpusEntry",
    "DomainError",
    "EqMode",
    "EvaluationError",
    "Expr",
    "InnerOptions",
    "InnerResult",
    "InnerStatus",
    "KktResidual",
    "LpData",
    "LpOracleResult",
    "LpStatus",
    "MasterEval",
    "NotCoerciveError",
    "OuterConfig",
    "ParseError",
    "Power",
    "ProbeReport",
    "ProblemError",
    "ProblemSource",
    "ProblemSpec",
    "Reference",
    "ScalarFunction",
    "ScanTable",
    "SolveReport",
    "SolveStatus",
    "TracePoint",
    "Var",
    "builtin_corpus",
    "build_lp_problem",
    "classify_termination",
    "compare_to_reference",
    "dumps_report",
    "eval_constraints",
    "eval_expr",
    "expr_to_str",
    "grad_expr",
    "inner_minimize",
    "kkt_residual",
    "load_lp_json",
    "lp_vertex_oracle",
    "map_G",
    "master_eval",
    "multiplier_update",
    "parse_expression",
    "parse_problem_file",
    "random_bounded_lp",
    "run_suite",
    "safe_exp",
    "safe_exp_deriv",
    "scan_1d",
    "scan_csv_text",
    "solve",
    "solve_lp",
    "trace_csv_text",
    "transform_equalities",
    "validate_corpus",
    "well_balanced_probe",
    "write_scan_csv",
    "write_trace_csv",
]
