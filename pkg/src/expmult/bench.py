"""Curated problem corpus with reference solutions, and a suite runner.

Each entry carries a small problem (either problem-file text or LP data), an
independently derived reference where one exists, per-entry tolerances and
any solver-configuration overrides the entry needs.  References are
revalidated against their own optimality conditions every time the corpus is
loaded, so a typo in a frozen value fails loudly.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expressions import parse_problem_file
from .inner import InnerOptions
from .lp import LpData, build_lp_problem
from .outer import OuterConfig, SolveReport, SolveStatus, solve
from .problem import Array, EqMode, ProblemError, ProblemSpec, kkt_residual, transform_equalities


@dataclass(frozen=True)
class Reference:
    """Independently derived solution an entry is checked against."""

    x_ref: tuple[float, ...]
    obj_ref: float
    y_ref: tuple[float, ...] | None = None
    provenance: str = "analytic-kkt"  # analytic-kkt | vertex-oracle | unconstrained-feasible


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    source: str | LpData  # problem-file text, or LP data
    expected_status: SolveStatus
    reference: Reference | None = None
    eq_mode: EqMode = EqMode.SQUARE_EACH
    tol_obj: float = 1e-6
    tol_x: float = 1e-5
    tol_y: float = 1e-5
    cfg_overrides: dict = field(default_factory=dict)
    inner_overrides: dict = field(default_factory=dict)
    notes: str = ""

    def build(self) -> ProblemSpec:
        if isinstance(self.source, LpData):
            return build_lp_problem(self.source)
        spec = parse_problem_file(self.source).to_problem_spec()
        return transform_equalities(spec, self.eq_mode)

    def config(self, base: OuterConfig | None = None) -> OuterConfig:
        base = base or OuterConfig()
        return dataclasses.replace(base, **self.cfg_overrides)

    def inner_options(self, base: InnerOptions | None = None) -> InnerOptions:
        base = base or InnerOptions()
        return dataclasses.replace(base, **self.inner_overrides)


_ACTIVE_1D = """\
# Quadratic pulled left against x >= 0; the constraint is active at 0.
vars: x1
minimize: (x1+2)^2/2
subject_to:
  ineq: -x1
"""

_INACTIVE_1D = """\
# Unconstrained minimum x = 1 already satisfies x <= 10 with a wide margin.
vars: x1
minimize: (x1-1)^2/2
subject_to:
  ineq: x1-10
"""

_BOUNDARY_1D = """\
# Degenerate: the unconstrained minimum sits exactly on the boundary, so the
# optimal multiplier is 0 while the constraint is active.
vars: x1
minimize: (x1-1)^2/2
subject_to:
  ineq: x1-1
"""

_CIRCLE = """\
# Linear cost over a disc; optimum (-1,-1) with multiplier 1/2.
vars: x1 x2
minimize: x1+x2
subject_to:
  ineq: x1^2+x2^2-2
"""

_TWO_CONSTRAINT = """\
# Disc plus the half-plane x1 >= 0; both constraints are active at (0,-sqrt(2)).
vars: x1 x2
minimize: x1+x2
subject_to:
  ineq: x1^2+x2^2-2
  ineq: -x1
"""

_EQUALITY_QP = """\
# Smallest-norm point of the line x1 + x2 = 1.
vars: x1 x2
minimize: x1^2+x2^2
subject_to:
  eq: x1+x2-1
"""

_NONCONVEX = """\
# Tilted double well restricted to x >= 1/2; the feasible valley's local
# minimum is accepted (no global claim).
vars: x1
minimize: (x1^2-1)^2+x1/10
subject_to:
  ineq: 1/2-x1
"""

# Root of 4x^3 - 4x + 0.1 = 0 near 0.987 (bisection to 1e-16), the feasible
# valley's stationary point of the double-well objective above.
_NONCONVEX_XSTAR = 0.9872574766623534
_NONCONVEX_OBJ = 0.09936698552395944

_SQRT2 = float(np.sqrt(2.0))


def builtin_corpus() -> list[CorpusEntry]:
    """The default corpus: convex single/multi-constraint problems, LPs,
    equality transforms and one non-convex valley."""
    entries = [
        CorpusEntry(
            id="active-1d",
            source=_ACTIVE_1D,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(x_ref=(0.0,), obj_ref=2.0, y_ref=(2.0,)),
            tol_x=1e-6,
            tol_y=1e-6,
        ),
        CorpusEntry(
            id="inactive-1d",
            source=_INACTIVE_1D,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(1.0,), obj_ref=0.0, y_ref=(0.0,),
                provenance="unconstrained-feasible",
            ),
            tol_x=1e-6,
            tol_y=1e-6,
        ),
        CorpusEntry(
            id="boundary-1d",
            source=_BOUNDARY_1D,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(1.0,), obj_ref=0.0, y_ref=(0.0,),
                provenance="analytic-kkt",
            ),
            # The multiplier converges to its boundary value 0 only
            # harmonically here (no strict complementarity), so the entry
            # runs with an honest, looser stop product and x tolerance.
            cfg_overrides={"tol_comp": 1e-4, "max_outer": 20000},
            tol_x=0.05,
            tol_y=0.02,
            tol_obj=1e-3,
            notes="degenerate boundary multiplier; sublinear in x by design",
        ),
        CorpusEntry(
            id="circle",
            source=_CIRCLE,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(x_ref=(-1.0, -1.0), obj_ref=-2.0, y_ref=(0.5,)),
            tol_x=1e-5,
            tol_y=1e-5,
        ),
        CorpusEntry(
            id="disc-halfplane",
            source=_TWO_CONSTRAINT,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(0.0, -_SQRT2),
                obj_ref=-_SQRT2,
                y_ref=(1.0 / (2.0 * _SQRT2), 1.0),
            ),
            tol_x=1e-5,
            tol_y=1e-5,
        ),
        CorpusEntry(
            id="eq-square",
            source=_EQUALITY_QP,
            eq_mode=EqMode.SQUARE_EACH,
            expected_status=SolveStatus.CONVERGED_DIVERGING_MULTIPLIERS,
            reference=Reference(x_ref=(0.5, 0.5), obj_ref=0.5, y_ref=None),
            # The squared equality is not well-balanced: the multiplier must
            # blow up with y*g ~ 1/(2y).  Start inside the diverging regime
            # (products already below tol_comp) and watch x stay frozen.
            cfg_overrides={"y0": 2e8, "max_outer": 50},
            inner_overrides={"grad_tol": 1e-6},
            tol_x=1e-4,
            tol_obj=1e-4,
            notes="diverging-multiplier regime; products monitored, y unbounded",
        ),
        CorpusEntry(
            id="eq-pair",
            source=_EQUALITY_QP,
            eq_mode=EqMode.PAIR,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(x_ref=(0.5, 0.5), obj_ref=0.5, y_ref=None),
            tol_x=1e-5,
            tol_obj=1e-6,
            notes="paired inequalities keep multipliers finite (non-unique duals)",
        ),
        CorpusEntry(
            id="nonconvex-well",
            source=_NONCONVEX,
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(_NONCONVEX_XSTAR,),
                obj_ref=_NONCONVEX_OBJ,
                y_ref=(0.0,),
                provenance="unconstrained-feasible",
            ),
            tol_x=1e-6,
            tol_obj=1e-8,
            notes="local-minimum acceptance only; KKT residual is the check",
        ),
        CorpusEntry(
            id="lp-triangle",
            source=LpData(
                u=np.array([-1.0, -2.0]),
                A=np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]),
                b=np.array([1.0, 0.0, 0.0]),
            ),
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(0.0, 1.0), obj_ref=-2.0, y_ref=(2.0, 1.0, 0.0),
                provenance="vertex-oracle",
            ),
            cfg_overrides={"max_outer": 5000},
            tol_x=1e-5,
            tol_y=1e-5,
        ),
        CorpusEntry(
            id="lp-halfline",
            source=LpData(u=np.array([1.0]), A=np.array([[-1.0]]), b=np.array([0.0])),
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(0.0,), obj_ref=0.0, y_ref=(1.0,), provenance="vertex-oracle"
            ),
            cfg_overrides={"max_outer": 5000},
            tol_x=1e-6,
            tol_y=1e-6,
        ),
        CorpusEntry(
            id="lp-box3",
            source=LpData(
                u=np.array([-1.0, -1.0, -1.0]),
                A=np.vstack([np.eye(3), -np.eye(3)]),
                b=np.ones(6),
            ),
            expected_status=SolveStatus.CONVERGED,
            reference=Reference(
                x_ref=(1.0, 1.0, 1.0),
                obj_ref=-3.0,
                y_ref=(1.0, 1.0, 1.0, 0.0, 0.0, 0.0),
                provenance="vertex-oracle",
            ),
            cfg_overrides={"max_outer": 5000},
            tol_x=1e-5,
            tol_y=1e-5,
        ),
        CorpusEntry(
            id="lp-unbounded",
            source=LpData(u=np.array([-1.0]), A=np.array([[-1.0]]), b=np.array([0.0])),
            expected_status=SolveStatus.NOT_COERCIVE,
            reference=None,
            notes="cost decreases along the feasible ray; master is non-coercive",
        ),
        CorpusEntry(
            id="lp-infeasible",
            source=LpData(
                u=np.array([0.0, 1.0]),
                A=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                b=np.array([-1.0, 0.0]),
            ),
            expected_status=SolveStatus.NOT_COERCIVE,
            reference=None,
            notes="x1 <= -1 and x1 >= 0 clash; the free cost direction x2 "
            "makes the master non-coercive",
        ),
    ]
    return entries


def validate_corpus(corpus: Sequence[CorpusEntry]) -> None:
    """Revalidate every frozen reference against its own optimality conditions.

    x_ref must satisfy the (transformed) constraints to 1e-9; when y_ref is
    present the KKT stationarity at (x_ref, y_ref) must be below 1e-8.
    """
    for entry in corpus:
        if entry.reference is None:
            continue
        p = entry.build()
        x_ref = np.asarray(entry.reference.x_ref, dtype=float)
        if entry.reference.y_ref is not None:
            y_ref = np.asarray(entry.reference.y_ref, dtype=float)
            kkt = kkt_residual(p, x_ref, y_ref)
            if kkt.stationarity > 1e-8:
                raise ProblemError(
                    f"corpus entry {entry.id!r}: reference stationarity "
                    f"{kkt.stationarity:.3e} exceeds 1e-8"
                )
            feas = kkt.feasibility
        else:
            vals = [g(x_ref) for g in p.ineq]
            feas = max(vals) if vals else -np.inf
        if feas > 1e-9:
            raise ProblemError(
                f"corpus entry {entry.id!r}: reference point violates "
                f"constraints by {feas:.3e}"
            )
        obj = p.objective(x_ref)
        if abs(obj - entry.reference.obj_ref) > 1e-9:
            raise ProblemError(
                f"corpus entry {entry.id!r}: stored objective "
                f"{entry.reference.obj_ref!r} but f(x_ref) = {obj!r}"
            )


def compare_to_reference(
    report: SolveReport, entry: CorpusEntry, tols: dict | None = None
) -> tuple[bool, list[str]]:
    """Check a solve report against an entry's expectations.

    Returns (passed, reasons); reasons list every failed check.
    """
    tols = tols or {}
    tol_obj = tols.get("tol_obj", entry.tol_obj)
    tol_x = tols.get("tol_x", entry.tol_x)
    tol_y = tols.get("tol_y", entry.tol_y)
    reasons: list[str] = []
    if report.status is not entry.expected_status:
        reasons.append(
            f"status mismatch: expected {entry.expected_status.value}, "
            f"got {report.status.value}"
        )
    if entry.reference is not None:
        p = entry.build()
        obj = p.objective(report.x_star)
        obj_err = abs(obj - entry.reference.obj_ref)
        if obj_err > tol_obj:
            reasons.append(f"objective error {obj_err:.3e} > {tol_obj:.1e}")
        x_err = float(
            np.max(np.abs(report.x_star - np.asarray(entry.reference.x_ref)))
        )
        if x_err > tol_x:
            reasons.append(f"x error {x_err:.3e} > {tol_x:.1e}")
        if entry.reference.y_ref is not None:
            y_err = float(
                np.max(np.abs(report.y_star - np.asarray(entry.reference.y_ref)))
            )
            if y_err > tol_y:
                reasons.append(f"y error {y_err:.3e} > {tol_y:.1e}")
    return (not reasons), reasons


@dataclass
class BenchReport:
    entries: list[dict]
    summary: dict

    def to_dict(self) -> dict:
        return {"entries": self.entries, "summary": self.summary}

    def passed(self) -> bool:
        return self.summary["fail"] == 0


def _run_entry(
    entry: CorpusEntry, base_cfg: OuterConfig | None, base_opts: InnerOptions | None
) -> dict:
    start = time.perf_counter()
    record: dict = {"id": entry.id}
    try:
        p = entry.build()
        report = solve(p, entry.config(base_cfg), entry.inner_options(base_opts))
        passed, reasons = compare_to_reference(report, entry)
        record.update(
            {
                "status": report.status.value,
                "obj_err": (
                    abs(p.objective(report.x_star) - entry.reference.obj_ref)
                    if entry.reference is not None
                    else None
                ),
                "x_err": (
                    float(
                        np.max(
                            np.abs(
                                report.x_star - np.asarray(entry.reference.x_ref)
                            )
                        )
                    )
                    if entry.reference is not None
                    else None
                ),
                "kkt": report.kkt.as_dict(),
                "outer_iters": report.outer_iters,
                "passed": passed,
                "reasons": reasons,
            }
        )
    except Exception as exc:  # per-entry failures never abort the suite
        record.update(
            {
                "status": "Error",
                "obj_err": None,
                "x_err": None,
                "kkt": None,
                "outer_iters": 0,
                "passed": False,
                "reasons": [f"exception: {exc}"],
            }
        )
    record["ms"] = (time.perf_counter() - start) * 1000.0
    return record


def run_suite(
    corpus: Sequence[CorpusEntry] | None = None,
    cfg: OuterConfig | None = None,
    opts: InnerOptions | None = None,
    jobs: int = 1,
) -> BenchReport:
    """Solve every corpus entry, check references and aggregate pass/fail.

    Entries are independent and may run on up to ``jobs`` worker threads;
    the report is assembled in corpus order either way.
    """
    if corpus is None:
        corpus = builtin_corpus()
    if not corpus:
        raise ProblemError("corpus must be nonempty")
    validate_corpus(corpus)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(lambda e: _run_entry(e, cfg, opts), corpus))
    else:
        records = [_run_entry(e, cfg, opts) for e in corpus]
    n_pass = sum(1 for r in records if r["passed"])
    return BenchReport(
        entries=records,
        summary={"pass": n_pass, "fail": len(records) - n_pass},
    )


def _fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def _json_fragment(obj) -> str:
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_fragment(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {_json_fragment(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_report(obj: dict) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    return _json_fragment(obj) + "\n"
