"""Linear programs: master-function frontend and a brute-force oracle.

The frontend turns dense LP data (u, A, b) for "minimize u.x subject to
A x <= b" into a problem the exponential-multiplier solver can run, with
closed-form derivatives.  The oracle enumerates basic solutions exhaustively
and is used only to verify the method at desk scale; it is deliberately
independent of the master-function path.
"""

from __future__ import annotations

import enum
import itertools
import json
import warnings as _warnings
from dataclasses import dataclass

import numpy as np

from .inner import InnerOptions
from .outer import OuterConfig, SolveReport, solve
from .problem import Array, ProblemError, ProblemSpec, ScalarFunction

_FEAS_TOL = 1e-9
_MAX_N = 8
_MAX_M = 16


@dataclass(frozen=True)
class LpData:
    """Dense description of "minimize u.x subject to A x <= b"."""

    u: Array
    A: Array
    b: Array

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape != (b.size, u.size):
            raise ProblemError(
                f"inconsistent LP dimensions: A {A.shape}, u ({u.size},), b ({b.size},)"
            )
        for name, arr in (("u", u), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise ProblemError(f"LP data {name} has non-finite entries")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.u.size

    @property
    def n_rows(self) -> int:
        return self.b.size


def load_lp_json(text: str) -> LpData:
    """Parse the LP interchange format: {"u": [...], "A": [[...], ...], "b": [...]}."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"malformed LP JSON: {exc}") from exc
    if not isinstance(obj, dict) or not {"u", "A", "b"} <= set(obj):
        raise ProblemError('LP JSON must be an object with keys "u", "A", "b"')
    try:
        return LpData(u=np.asarray(obj["u"], dtype=float),
                      A=np.asarray(obj["A"], dtype=float),
                      b=np.asarray(obj["b"], dtype=float))
    except (TypeError, ValueError) as exc:
        raise ProblemError(f"malformed LP JSON arrays: {exc}") from exc


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LpOracleResult:
    status: LpStatus
    x_opt: Array | None = None
    obj: float | None = None


def build_lp_problem(lp: LpData) -> ProblemSpec:
    """Problem spec with objective u.x and constraints A_k.x - b_k <= 0.

    Rows with A_k = 0 carry no gradient information: such a row with b_k < 0
    can never hold and is rejected; with b_k >= 0 it is vacuous and dropped
    with a warning.  The returned problem's constraints are the kept rows in
    their original order.
    """
    u, A, b = lp.u, lp.A, lp.b
    kept_rows: list[int] = []
    for k in range(lp.n_rows):
        if np.all(A[k] == 0.0):
            if b[k] < 0.0:
                raise ProblemError(
                    f"LP row {k} is 0.x <= {b[k]}, which is infeasible by itself"
                )
            _warnings.warn(f"dropping vacuous LP row {k} (zero coefficients)")
            continue
        kept_rows.append(k)

    def make_row(k: int) -> ScalarFunction:
        row = A[k].copy()
        rhs = float(b[k])
        return ScalarFunction(
            lambda x, row=row, rhs=rhs: float(row @ x) - rhs,
            lambda x, row=row: row.copy(),
            name=f"row_{k}",
        )

    objective = ScalarFunction(
        lambda x: float(u @ x), lambda x: u.copy(), name="linear_cost"
    )
    return ProblemSpec(
        dim_x=lp.dim,
        objective=objective,
        ineq=tuple(make_row(k) for k in kept_rows),
    )


def _feasible_vertices(Ar: Array, br: Array, r: int) -> list[Array]:
    """All basic feasible points of {z : Ar z <= br} with Ar of full column rank."""
    m = br.size
    vertices: list[Array] = []
    for subset in itertools.combinations(range(m), r):
        block = Ar[list(subset)]
        try:
            z = np.linalg.solve(block, br[list(subset)])
        except np.linalg.LinAlgError:
            continue
        if np.all(Ar @ z <= br + _FEAS_TOL):
            vertices.append(z)
    return vertices


def _is_feasible(Ar: Array, br: Array, r: int) -> bool:
    """Decide feasibility of {z : Ar z <= br} by a bounded phase-1 polytope.

    Minimizes the uniform slack s subject to Ar z - s 1 <= br and s >= -1.
    That polyhedron is nonempty, pointed and bounded below in s, so its
    minimum sits at an enumerable vertex; the original system is feasible
    exactly when the minimum slack is <= 0.
    """
    m = br.size
    ext_A = np.hstack([np.vstack([Ar, np.zeros((1, r))]),
                       -np.ones((m + 1, 1))])
    ext_b = np.concatenate([br, [1.0]])
    best = np.inf
    for subset in itertools.combinations(range(m + 1), r + 1):
        block = ext_A[list(subset)]
        try:
            zs = np.linalg.solve(block, ext_b[list(subset)])
        except np.linalg.LinAlgError:
            continue
        if np.all(ext_A @ zs <= ext_b + _FEAS_TOL):
            best = min(best, zs[-1])
    return best <= _FEAS_TOL


def _improving_ray(Ar: Array, ur: Array, r: int) -> Array | None:
    """A direction z with Ar z <= 0 and ur.z = -1, or None if none exists.

    Candidate rays are vertices of the pointed polyhedron {Ar z <= 0,
    ur.z = -1}: each is cut out by the equality plus r-1 rows, so all
    (r-1)-subsets are tried and every candidate is verified before use.
    """
    m = Ar.shape[0]
    if r == 0:
        return None
    for subset in itertools.combinations(range(m), r - 1):
        block = np.vstack([Ar[list(subset)], ur.reshape(1, r)])
        rhs = np.concatenate([np.zeros(len(subset)), [-1.0]])
        try:
            z = np.linalg.solve(block, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.all(Ar @ z <= _FEAS_TOL) and abs(float(ur @ z) + 1.0) <= _FEAS_TOL:
            return z
    return None


def lp_vertex_oracle(lp: LpData) -> LpOracleResult:
    """Solve a desk-scale LP by exhaustive enumeration of basic solutions.

    Works in the row-space coordinates of A so rank-deficient data (free
    directions) is handled exactly: a cost component along a free direction
    makes a feasible LP unbounded, everything else reduces to a pointed
    polyhedron whose vertices can be enumerated.  Ties in the objective are
    broken by the lexicographically smallest point.
    """
    if lp.dim > _MAX_N or lp.n_rows > _MAX_M:
        raise ProblemError(
            f"oracle limits exceeded: N <= {_MAX_N} and m <= {_MAX_M} required"
        )
    # Constant rows decide feasibility on their own.
    zero_mask = np.all(lp.A == 0.0, axis=1)
    if np.any(zero_mask & (lp.b < -_FEAS_TOL)):
        return LpOracleResult(LpStatus.INFEASIBLE)
    A = lp.A[~zero_mask]
    b = lp.b[~zero_mask]
    u = lp.u
    n = lp.dim

    if A.shape[0] == 0:
        if float(np.linalg.norm(u)) > _FEAS_TOL:
            return LpOracleResult(LpStatus.UNBOUNDED)
        return LpOracleResult(LpStatus.OPTIMAL, x_opt=np.zeros(n), obj=0.0)

    # Row-space reduction: x = V z + (component in null(A), invisible to A).
    _, svals, vt = np.linalg.svd(A)
    r = int(np.sum(svals > 1e-12 * svals[0]))
    V = vt[:r].T  # N x r, orthonormal columns spanning the row space
    Ar = A @ V
    ur = V.T @ u
    u_perp = u - V @ ur

    if not _is_feasible(Ar, b, r):
        return LpOracleResult(LpStatus.INFEASIBLE)
    if float(np.linalg.norm(u_perp)) > _FEAS_TOL:
        # The cost leans along a direction no constraint sees.
        return LpOracleResult(LpStatus.UNBOUNDED)
    if _improving_ray(Ar, ur, r) is not None:
        return LpOracleResult(LpStatus.UNBOUNDED)

    vertices = _feasible_vertices(Ar, b, r)
    if not vertices:
        raise ProblemError(
            "LP is feasible and bounded but no basic point was found; "
            "data is too degenerate for the oracle"
        )
    best_x: Array | None = None
    best_obj = np.inf
    for z in vertices:
        obj = float(ur @ z)
        x = V @ z
        if obj < best_obj - _FEAS_TOL:
            best_x, best_obj = x, obj
        elif abs(obj - best_obj) <= _FEAS_TOL and best_x is not None:
            if tuple(x) < tuple(best_x):
                best_x, best_obj = x, obj
    assert best_x is not None
    return LpOracleResult(LpStatus.OPTIMAL, x_opt=best_x, obj=float(u @ best_x))


def solve_lp(
    lp: LpData,
    cfg: OuterConfig | None = None,
    opts: InnerOptions | None = None,
    cross_check: bool = True,
) -> SolveReport:
    """Run the exponential-multiplier method on an LP.

    An unbounded LP makes the master function non-coercive, so the report
    comes back with status NotCoercive.  When the LP fits the oracle limits
    and ``cross_check`` is set, the report's warnings carry a one-line
    comparison against the enumeration oracle.
    """
    p = build_lp_problem(lp)
    report = solve(p, cfg, opts)
    if cross_check and lp.dim <= _MAX_N and lp.n_rows <= _MAX_M:
        oracle = lp_vertex_oracle(lp)
        if oracle.status is LpStatus.OPTIMAL and report.status.value.startswith(
            "Converged"
        ):
            gap = abs(float(lp.u @ report.x_star) - oracle.obj)
            report.warnings.append(
                f"oracle cross-check: objective gap {gap:.3e} "
                f"(oracle {oracle.obj:.12g})"
            )
        else:
            report.warnings.append(
                f"oracle cross-check: oracle says {oracle.status.value}, "
                f"solver says {report.status.value}"
            )
    return report


def random_bounded_lp(rng: np.random.Generator, max_dim: int = 4, max_rows: int = 8
                      ) -> tuple[LpData, LpOracleResult]:
    """Draw a random feasible LP with an optimal solution (oracle-certified).

    Feasibility is built in by choosing b = A x0 + slack with slack > 0;
    candidates whose oracle status is not Optimal are redrawn.
    """
    while True:
        n = int(rng.integers(1, max_dim + 1))
        m = int(rng.integers(n + 1, max_rows + 1))
        A = rng.integers(-3, 4, size=(m, n)).astype(float)
        if np.any(np.all(A == 0.0, axis=1)):
            continue
        x0 = rng.integers(-2, 3, size=n).astype(float)
        slack = rng.uniform(0.3, 2.5, size=m)
        b = A @ x0 + slack
        u = rng.integers(-3, 4, size=n).astype(float)
        if np.all(u == 0.0):
            continue
        lp = LpData(u=u, A=A, b=b)
        oracle = lp_vertex_oracle(lp)
        if oracle.status is LpStatus.OPTIMAL:
            return lp, oracle
