"""Outer fixed-point iteration on the multiplier vector.

One outer step minimizes the master function over x at fixed multipliers y
(warm-started from the previous x) and then rescales each multiplier by
exp(y_k g_k(x)).  Optimal multipliers are fixed points of the resulting map
G(y) = (y_k exp(y_k g_k(x(y))))_k; at a fixed point every product y_k g_k
vanishes and x(y) solves the constrained program.

Two empirical regimes matter for termination.  At an interior fixed point
(active constraint, positive multiplier) the iteration contracts
geometrically.  Toward the boundary fixed point y_k = 0 (inactive
constraint) the map has unit derivative, so y_k decays only harmonically
(~1/j); once a component is small and its constraint is strictly feasible
by a margin, it is collapsed to exactly 0 (the continuity extension of the
map, which is absorbing) so the remaining components can finish
geometrically.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .inner import (
    InnerOptions,
    InnerResult,
    InnerStatus,
    inner_minimize,
    master_eval,
    safe_exp,
)
from .problem import (
    Array,
    KktResidual,
    ProblemError,
    ProblemSpec,
    eval_constraints,
    kkt_residual,
)

_X_STEP_TOL = 1e-8          # x considered frozen below this step size
_X_STEP_WINDOW = 5          # trace points inspected for the frozen-x test
_RUNAWAY_FACTOR = 100.0     # stop when some y exceeds y_cap by this factor


class NotCoerciveError(RuntimeError):
    """The inner minimization diverged: the master function has no minimum."""

    def __init__(self, message: str, x_last: Array | None = None):
        super().__init__(message)
        self.x_last = x_last


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    CONVERGED_DIVERGING_MULTIPLIERS = "ConvergedDivergingMultipliers"
    MAX_ITERATIONS = "MaxIterations"
    INNER_FAILURE = "InnerFailure"
    NOT_COERCIVE = "NotCoercive"


@dataclass
class OuterConfig:
    """Configuration of the outer iteration.

    ``y_flush`` / ``flush_feas_margin`` control the collapse of vanishing
    multipliers described in the module docstring: a component is set to
    exactly 0 once it falls below ``y_flush`` while its constraint value is
    below ``-flush_feas_margin``.  Set ``y_flush = 0`` to disable.
    """

    tol_comp: float = 1e-8
    tol_feas: float = 1e-8
    max_outer: int = 500
    y0: float | Sequence[float] = 1.0
    x0: float | Sequence[float] = 0.0
    y_cap: float = 1e8
    omega: float = 1.0
    y_flush: float = 1e-2
    flush_feas_margin: float = 1e-6

    def __post_init__(self):
        if self.tol_comp <= 0 or self.tol_feas <= 0:
            raise ProblemError("tolerances must be positive")
        if self.max_outer < 1:
            raise ProblemError("max_outer must be a positive integer")
        if self.y_cap <= 0:
            raise ProblemError("y_cap must be positive")
        if not 0.0 < self.omega <= 1.0:
            raise ProblemError("omega must lie in (0, 1]")
        if self.y_flush < 0 or self.flush_feas_margin < 0:
            raise ProblemError("flush thresholds must be >= 0")

    def initial_y(self, m: int) -> Array:
        y = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if y.size == 1:
            y = np.full(m, float(y[0]))
        if y.shape != (m,):
            raise ProblemError(f"y0 has shape {y.shape}, expected ({m},)")
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise ProblemError("y0 must be strictly positive and finite")
        return y

    def initial_x(self, n: int) -> Array:
        x = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x.size == 1:
            x = np.full(n, float(x[0]))
        if x.shape != (n,):
            raise ProblemError(f"x0 has shape {x.shape}, expected ({n},)")
        if not np.all(np.isfinite(x)):
            raise ProblemError("x0 must be finite")
        return x


@dataclass(frozen=True)
class TracePoint:
    """State recorded after one outer iteration (y is the pre-update value)."""

    iter: int
    x: Array
    y: Array
    g_vals: Array
    products: Array
    L_value: float
    inner_iters: int
    inner_grad_norm: float


@dataclass
class SolveReport:
    status: SolveStatus
    x_star: Array
    y_star: Array
    kkt: KktResidual
    trace: list[TracePoint]
    warnings: list[str] = field(default_factory=list)

    @property
    def outer_iters(self) -> int:
        return len(self.trace)

    def objective(self, p: ProblemSpec) -> float:
        return p.objective(self.x_star)


def multiplier_update(y, g_vals, omega: float = 1.0, exp_cap: float = 30.0) -> Array:
    """Exponential multiplier update y_k <- y_k exp(omega y_k g_k).

    With omega = 1 this is the exact update rule; omega < 1 damps it.  The
    exponential is safeguarded by the same capped continuation used in the
    master function, so the result is always finite.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    g_vals = np.atleast_1d(np.asarray(g_vals, dtype=float))
    if y.shape != g_vals.shape:
        raise ProblemError(f"shape mismatch: y {y.shape} vs g {g_vals.shape}")
    if np.any(y < 0):
        raise ProblemError("multipliers must be nonnegative")
    return y * safe_exp(omega * y * g_vals, exp_cap)


def map_G(
    p: ProblemSpec,
    y,
    x_warm=None,
    cfg: OuterConfig | None = None,
    opts: InnerOptions | None = None,
) -> tuple[Array, Array]:
    """One application of the multiplier map: y -> (x(y), G(y)).

    x(y) minimizes the master function starting from ``x_warm`` (or the
    configured x0).  Components with y_k = 0 return G_k = 0, the continuity
    extension of the map at the boundary.  Raises :class:`NotCoerciveError`
    when the inner minimization diverges.
    """
    cfg = cfg or OuterConfig()
    opts = opts or InnerOptions()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x_start = cfg.initial_x(p.dim_x) if x_warm is None else np.asarray(x_warm, float)
    result = inner_minimize(p, y, x_start, opts)
    if result.status is InnerStatus.DIVERGED:
        raise NotCoerciveError(
            "inner minimization diverged: master function looks non-coercive",
            x_last=result.x_star,
        )
    x = result.x_star
    g_vals = eval_constraints(p, x)
    return x, multiplier_update(y, g_vals, 1.0, opts.exp_cap)


def classify_termination(
    trace: Sequence[TracePoint], cfg: OuterConfig
) -> SolveStatus | None:
    """Decide whether the iteration recorded in ``trace`` is finished.

    Converged: all products |y_k g_k| within tol_comp, feasibility within
    tol_feas and every multiplier below y_cap.  When products are small and
    x is frozen but some multiplier passed y_cap, the growth is structural
    (equality-derived constraint) and the run is classified as
    ConvergedDivergingMultipliers.  At the iteration limit: MaxIterations.
    Otherwise None (keep iterating).
    """
    if not trace:
        raise ProblemError("classify_termination needs a nonempty trace")
    last = trace[-1]
    m = last.y.size
    max_prod = float(np.max(np.abs(last.products))) if m else 0.0
    max_g = float(np.max(last.g_vals)) if m else -np.inf
    if max_prod <= cfg.tol_comp and max_g <= cfg.tol_feas and np.all(last.y < cfg.y_cap):
        return SolveStatus.CONVERGED
    if (
        max_prod <= cfg.tol_comp
        and m
        and np.any(last.y >= cfg.y_cap)
        and len(trace) >= _X_STEP_WINDOW
    ):
        window = trace[-_X_STEP_WINDOW:]
        steps = [
            float(np.max(np.abs(b.x - a.x))) for a, b in zip(window, window[1:])
        ]
        if max(steps) <= _X_STEP_TOL:
            return SolveStatus.CONVERGED_DIVERGING_MULTIPLIERS
    if len(trace) >= cfg.max_outer:
        return SolveStatus.MAX_ITERATIONS
    return None


def solve(
    p: ProblemSpec,
    cfg: OuterConfig | None = None,
    opts: InnerOptions | None = None,
) -> SolveReport:
    """Run the full fixed-point iteration on an inequality-only problem."""
    cfg = cfg or OuterConfig()
    opts = opts or InnerOptions()
    if p.eq:
        raise ProblemError("solve needs an inequality-only problem; transform first")
    m = p.n_ineq
    y = cfg.initial_y(m)
    x = cfg.initial_x(p.dim_x)
    trace: list[TracePoint] = []
    warnings: list[str] = []
    status: SolveStatus | None = None
    runaway_streak = 0

    while status is None:
        result = inner_minimize(p, y, x, opts)
        if result.status is InnerStatus.DIVERGED:
            status = SolveStatus.NOT_COERCIVE
            warnings.append(
                f"outer {len(trace)}: inner solve diverged "
                f"(|x| = {float(np.linalg.norm(result.x_star)):.3e}, "
                f"L = {result.value:.3e})"
            )
            break
        if result.status is InnerStatus.MAX_ITERS:
            if result.grad_norm < result.initial_grad_norm:
                warnings.append(
                    f"outer {len(trace)}: inner hit its iteration cap with reduced "
                    f"gradient ({result.initial_grad_norm:.3e} -> "
                    f"{result.grad_norm:.3e}); continuing"
                )
            else:
                status = SolveStatus.INNER_FAILURE
                warnings.append(
                    f"outer {len(trace)}: inner solve made no progress "
                    f"(gradient {result.grad_norm:.3e})"
                )
                break
        x = result.x_star
        g_vals = eval_constraints(p, x)
        trace.append(
            TracePoint(
                iter=len(trace),
                x=x.copy(),
                y=y.copy(),
                g_vals=g_vals,
                products=y * g_vals,
                L_value=result.value,
                inner_iters=result.iters,
                inner_grad_norm=result.grad_norm,
            )
        )
        if len(trace) >= 2 and trace[-1].L_value > trace[-2].L_value:
            warnings.append(
                f"outer {trace[-1].iter}: master value increased "
                f"({trace[-2].L_value:.6e} -> {trace[-1].L_value:.6e}); "
                "possible jump between valleys"
            )
        status = classify_termination(trace, cfg)
        if status is not None:
            break

        y_next = multiplier_update(y, g_vals, cfg.omega, opts.exp_cap)
        if cfg.y_flush > 0.0:
            collapse = (
                (y_next > 0.0)
                & (y_next <= cfg.y_flush)
                & (g_vals <= -cfg.flush_feas_margin)
            )
            # Collapse only after every non-candidate product has converged:
            # then x is essentially final, so a small multiplier on a
            # strictly feasible constraint really is heading to its boundary
            # value 0 rather than passing through a transient dip.
            if np.any(collapse) and np.all(
                np.abs(trace[-1].products[~collapse]) <= cfg.tol_comp
            ):
                y_next = y_next.copy()
                y_next[collapse] = 0.0
            # A collapsed barrier can be needed again if the iterate later
            # drifts across that constraint (e.g. along an optimal face);
            # re-seed it so the exponential growth can push back.
            revive = (y_next == 0.0) & (g_vals > cfg.tol_feas)
            if np.any(revive):
                y_next = y_next.copy()
                y_next[revive] = cfg.y_flush
                warnings.append(
                    f"outer {trace[-1].iter}: re-seeded collapsed multipliers "
                    f"{np.nonzero(revive)[0].tolist()} (constraint drifted "
                    "back into violation)"
                )
        if np.any(y_next > _RUNAWAY_FACTOR * cfg.y_cap) and float(
            np.max(np.abs(trace[-1].products))
        ) > cfg.tol_comp:
            # A single spike can be a benign transient (a tiny y0 overshoots
            # and falls right back); only persistent runaway means the
            # constraints are unsatisfiable near the iterate.
            runaway_streak += 1
            if runaway_streak >= 3:
                warnings.append(
                    "multiplier runaway without vanishing products; giving up "
                    "(the constraints look unsatisfiable near the current iterate)"
                )
                status = SolveStatus.MAX_ITERATIONS
                break
        else:
            runaway_streak = 0
        y = y_next

    y_star = trace[-1].y if trace else y
    x_star = trace[-1].x if trace else x
    kkt = kkt_residual(p, x_star, y_star)
    return SolveReport(
        status=status,
        x_star=x_star,
        y_star=y_star,
        kkt=kkt,
        trace=trace,
        warnings=warnings,
    )


@dataclass
class ScanTable:
    """Dense 1-D scan of the multiplier map for a single-constraint problem."""

    y: Array
    x: Array          # shape (len(y), dim_x)
    g_bar: Array      # g(x(y))
    G: Array          # y * exp(y g_bar)
    complete: bool = True

    def __len__(self):
        return self.y.size


def scan_1d(
    p: ProblemSpec,
    y_min: float,
    y_max: float,
    steps: int,
    cfg: OuterConfig | None = None,
    opts: InnerOptions | None = None,
) -> ScanTable:
    """Tabulate y, x(y), g(x(y)) and G(y) over a uniform multiplier grid.

    Requires exactly one inequality constraint.  The inner solves are
    warm-started along the grid.  If an inner solve fails at some grid point
    the table returned is truncated there and flagged incomplete.
    """
    cfg = cfg or OuterConfig()
    opts = opts or InnerOptions()
    if p.eq or p.n_ineq != 1:
        raise ProblemError("scan_1d needs exactly one inequality constraint")
    if not (0.0 < y_min <= y_max):
        raise ProblemError("need 0 < y_min <= y_max")
    if steps < 1:
        raise ProblemError("steps must be >= 1")
    if steps == 1:
        grid = np.array([y_min])
    else:
        if y_min == y_max:
            raise ProblemError("need y_min < y_max for a multi-point grid")
        grid = np.linspace(y_min, y_max, steps)

    xs, g_bars, gs_of_y = [], [], []
    x = cfg.initial_x(p.dim_x)
    complete = True
    for yv in grid:
        result = inner_minimize(p, np.array([yv]), x, opts)
        if result.status is not InnerStatus.CONVERGED:
            complete = False
            break
        x = result.x_star
        g_bar = float(eval_constraints(p, x)[0])
        xs.append(x.copy())
        g_bars.append(g_bar)
        gs_of_y.append(float(multiplier_update([yv], [g_bar], 1.0, opts.exp_cap)[0]))
    n_done = len(xs)
    return ScanTable(
        y=grid[:n_done],
        x=np.array(xs).reshape(n_done, p.dim_x),
        g_bar=np.array(g_bars),
        G=np.array(gs_of_y),
        complete=complete,
    )


@dataclass
class ProbeReport:
    """Feasibility of the inner minimizer at uniformly large multipliers."""

    y_large: float
    g_values: Array
    violated: Array  # boolean mask, g_k > 0
    passed: bool


def well_balanced_probe(
    p: ProblemSpec,
    y_large: float,
    opts: InnerOptions | None = None,
    x0=None,
) -> ProbeReport:
    """Check whether large multipliers force the inner minimizer to feasibility.

    A necessary (not sufficient) numerical check of well-balancedness: solves
    the inner problem at y = y_large * (1, ..., 1) and reports per-constraint
    values.  Problems with no constraints pass vacuously.
    """
    opts = opts or InnerOptions()
    if p.eq:
        raise ProblemError("probe needs an inequality-only problem")
    if y_large <= 0:
        raise ProblemError("y_large must be positive")
    if p.n_ineq == 0:
        empty = np.array([])
        return ProbeReport(y_large, empty, empty.astype(bool), True)
    y = np.full(p.n_ineq, float(y_large))
    x_start = np.zeros(p.dim_x) if x0 is None else np.asarray(x0, float)
    result = inner_minimize(p, y, x_start, opts)
    if result.status is InnerStatus.DIVERGED:
        raise NotCoerciveError(
            "inner minimization diverged during the probe", x_last=result.x_star
        )
    g_values = eval_constraints(p, result.x_star)
    violated = g_values > 0.0
    return ProbeReport(
        y_large=float(y_large),
        g_values=g_values,
        violated=violated,
        passed=bool(not np.any(violated)),
    )


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace_csv(report: SolveReport, stream) -> None:
    """Write the outer-iteration trace in the fixed CSV schema.

    Columns: iter, x_1..x_N, y_1..y_m, g_1..g_m, prod_1..prod_m, L,
    inner_iters, inner_grad_norm.  Floats carry 17 significant digits so
    identical runs produce byte-identical files.
    """
    if not report.trace:
        raise ProblemError("report has an empty trace")
    n = report.trace[0].x.size
    m = report.trace[0].y.size
    header = (
        ["iter"]
        + [f"x_{i + 1}" for i in range(n)]
        + [f"y_{k + 1}" for k in range(m)]
        + [f"g_{k + 1}" for k in range(m)]
        + [f"prod_{k + 1}" for k in range(m)]
        + ["L", "inner_iters", "inner_grad_norm"]
    )
    stream.write(",".join(header) + "\n")
    for pt in report.trace:
        row = (
            [str(pt.iter)]
            + [_fmt(v) for v in pt.x]
            + [_fmt(v) for v in pt.y]
            + [_fmt(v) for v in pt.g_vals]
            + [_fmt(v) for v in pt.products]
            + [_fmt(pt.L_value), str(pt.inner_iters), _fmt(pt.inner_grad_norm)]
        )
        stream.write(",".join(row) + "\n")


def trace_csv_text(report: SolveReport) -> str:
    buf = io.StringIO()
    write_trace_csv(report, buf)
    return buf.getvalue()


def write_scan_csv(table: ScanTable, stream) -> None:
    """CSV for a 1-D scan: y, x coordinates, g_bar, G (17 significant digits)."""
    n = table.x.shape[1] if table.x.ndim == 2 else 1
    if n == 1:
        header = ["y", "x_of_y", "g_bar", "G"]
    else:
        header = ["y"] + [f"x_{i + 1}" for i in range(n)] + ["g_bar", "G"]
    stream.write(",".join(header) + "\n")
    for i in range(len(table)):
        row = (
            [_fmt(table.y[i])]
            + [_fmt(v) for v in np.atleast_1d(table.x[i])]
            + [_fmt(table.g_bar[i]), _fmt(table.G[i])]
        )
        stream.write(",".join(row) + "\n")


def scan_csv_text(table: ScanTable) -> str:
    buf = io.StringIO()
    write_scan_csv(table, buf)
    return buf.getvalue()
