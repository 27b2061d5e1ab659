"""Canonical representation of a mathematical program.

A problem is "minimize f(x) subject to g_k(x) <= 0, h_i(x) = 0" with every
function stored behind a uniform value-plus-gradient contract.  The solver
itself only handles inequality constraints, so equality constraints must be
rewritten with :func:`transform_equalities` before solving.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class ProblemError(Exception):
    """Malformed problem definition or misuse of the problem API."""


class EvaluationError(ProblemError):
    """A stored function produced a non-finite value or a bad shape.

    ``index`` is the position of the offending constraint, or ``None``
    when the objective failed.
    """

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ScalarFunction:
    """Differentiable scalar function on R^N: a value and a gradient callable.

    Closed-form problems, LP rows and parsed expressions all plug into the
    solver through this one contract.
    """

    __slots__ = ("_value", "_grad", "name")

    def __init__(
        self,
        value: Callable[[Array], float],
        grad: Callable[[Array], Array],
        name: str | None = None,
    ):
        self._value = value
        self._grad = grad
        self.name = name

    def __call__(self, x: Array) -> float:
        return float(self._value(x))

    def gradient(self, x: Array) -> Array:
        return np.asarray(self._grad(x), dtype=float)

    def __repr__(self):  # pragma: no cover
        return f"ScalarFunction({self.name or 'anonymous'})"


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable description of a program: objective, constraints, dimension."""

    dim_x: int
    objective: ScalarFunction
    ineq: tuple[ScalarFunction, ...] = ()
    eq: tuple[ScalarFunction, ...] = ()
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.dim_x < 1:
            raise ProblemError(f"dim_x must be >= 1, got {self.dim_x}")
        object.__setattr__(self, "ineq", tuple(self.ineq))
        object.__setattr__(self, "eq", tuple(self.eq))
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.dim_x:
                raise ProblemError(
                    f"{len(names)} variable names for dim_x={self.dim_x}"
                )
            object.__setattr__(self, "names", names)

    @property
    def n_ineq(self) -> int:
        return len(self.ineq)

    @property
    def n_eq(self) -> int:
        return len(self.eq)

    def check_point(self, x) -> Array:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim_x,):
            raise ProblemError(f"point has shape {x.shape}, expected ({self.dim_x},)")
        if not np.all(np.isfinite(x)):
            raise ProblemError("point has non-finite entries")
        return x


class EqMode(enum.Enum):
    """How equality constraints are rewritten as inequalities.

    SquareEach turns every h_i into (1/2) h_i^2 <= 0, giving the update rule
    an independent barrier per constraint.  SquareAggregate collapses all
    equalities into the single inequality (1/2)|h|^2 <= 0.  Pair replaces
    each h_i by the two inequalities h_i <= 0 and -h_i <= 0.
    """

    SQUARE_EACH = "SquareEach"
    SQUARE_AGGREGATE = "SquareAggregate"
    PAIR = "Pair"


def _square_of(h: ScalarFunction, name: str) -> ScalarFunction:
    def value(x, h=h):
        v = h(x)
        return 0.5 * v * v

    def grad(x, h=h):
        return h(x) * h.gradient(x)

    return ScalarFunction(value, grad, name)


def _negation_of(h: ScalarFunction, name: str) -> ScalarFunction:
    return ScalarFunction(lambda x, h=h: -h(x), lambda x, h=h: -h.gradient(x), name)


def transform_equalities(p: ProblemSpec, mode: EqMode = EqMode.SQUARE_EACH) -> ProblemSpec:
    """Rewrite equality constraints as inequality constraints.

    The returned problem has an empty equality list; original inequality
    constraints keep their order and the transformed ones are appended.
    With no equalities the problem is returned unchanged.
    """
    if not p.eq:
        return p
    extra: list[ScalarFunction] = []
    if mode is EqMode.SQUARE_EACH:
        for i, h in enumerate(p.eq):
            extra.append(_square_of(h, name=f"sq({h.name or f'eq{i}'})"))
    elif mode is EqMode.SQUARE_AGGREGATE:
        eqs = p.eq

        def value(x, eqs=eqs):
            return 0.5 * sum(h(x) ** 2 for h in eqs)

        def grad(x, eqs=eqs):
            total = np.zeros(len(np.atleast_1d(x)))
            for h in eqs:
                total = total + h(x) * h.gradient(x)
            return total

        extra.append(ScalarFunction(value, grad, name="sq_aggregate"))
    elif mode is EqMode.PAIR:
        for i, h in enumerate(p.eq):
            base = h.name or f"eq{i}"
            extra.append(ScalarFunction(h, h.gradient, name=base))
            extra.append(_negation_of(h, name=f"neg({base})"))
    else:  # pragma: no cover
        raise ProblemError(f"unknown equality mode {mode!r}")
    return ProblemSpec(
        dim_x=p.dim_x,
        objective=p.objective,
        ineq=p.ineq + tuple(extra),
        eq=(),
        names=p.names,
    )


def eval_constraints(p: ProblemSpec, x) -> Array:
    """Evaluate all inequality constraints at ``x`` in declaration order."""
    if p.eq:
        raise ProblemError("problem still has equality constraints; transform first")
    x = p.check_point(x)
    vals = np.empty(p.n_ineq)
    for k, g in enumerate(p.ineq):
        v = g(x)
        if not np.isfinite(v):
            raise EvaluationError(
                f"constraint {k} evaluated to {v!r} at x={x.tolist()}", index=k
            )
        vals[k] = v
    return vals


@dataclass(frozen=True)
class KktResidual:
    """Quantified violation of the first-order optimality conditions.

    stationarity    ||grad f + sum_k y_k grad g_k||_2
    feasibility     max_k g_k(x)  (negative means strictly feasible)
    complementarity max_k |y_k g_k(x)|
    dual_feasibility max(0, -min_k y_k)
    """

    stationarity: float
    feasibility: float
    complementarity: float
    dual_feasibility: float

    def as_dict(self) -> dict[str, float]:
        return {
            "stationarity": self.stationarity,
            "feasibility": self.feasibility,
            "complementarity": self.complementarity,
            "dual_feasibility": self.dual_feasibility,
        }


def kkt_residual(p: ProblemSpec, x, y) -> KktResidual:
    """KKT residual of the inequality-only problem at a candidate pair (x, y)."""
    if p.eq:
        raise ProblemError("KKT residual is defined for inequality-only problems")
    x = p.check_point(x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (p.n_ineq,):
        raise ProblemError(f"multiplier has shape {y.shape}, expected ({p.n_ineq},)")
    grad = p.objective.gradient(x).astype(float)
    if grad.shape != (p.dim_x,):
        raise EvaluationError(
            f"objective gradient has shape {grad.shape}, expected ({p.dim_x},)"
        )
    if p.n_ineq == 0:
        return KktResidual(float(np.linalg.norm(grad)), 0.0, 0.0, 0.0)
    g_vals = eval_constraints(p, x)
    for k, g in enumerate(p.ineq):
        gk = g.gradient(x)
        if gk.shape != (p.dim_x,):
            raise EvaluationError(
                f"constraint {k} gradient has shape {gk.shape}", index=k
            )
        grad = grad + y[k] * gk
    return KktResidual(
        stationarity=float(np.linalg.norm(grad)),
        feasibility=float(np.max(g_vals)),
        complementarity=float(np.max(np.abs(y * g_vals))),
        dual_feasibility=float(max(0.0, -np.min(y))),
    )
