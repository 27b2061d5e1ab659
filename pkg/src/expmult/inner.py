"""Master function evaluation and its unconstrained minimization in x.

The master function is L(x, y) = f(x) + sum_k exp(y_k g_k(x)).  Each outer
iteration of the method minimizes it over x at fixed multipliers y.  The
exponential is replaced above a cap T by its second-order Taylor continuation
e^T (1 + u + u^2/2), u = t - T, which is C^2, strictly increasing and convex,
so overflow is impossible while convexity of L is preserved.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .problem import Array, EvaluationError, ProblemError, ProblemSpec

_X_ESCAPE = 1e10
_VALUE_ESCAPE = -1e15


_U_CLAMP = 1e130  # keeps the quadratic continuation finite for any double


def safe_exp(t, cap: float = 30.0):
    """exp(t) for t <= cap; quadratic continuation e^cap (1+u+u^2/2) above.

    Accepts scalars or arrays.  The continuation matches value, first and
    second derivative at t = cap.
    """
    t = np.asarray(t, dtype=float)
    u = np.minimum(np.maximum(t - cap, 0.0), _U_CLAMP)
    out = np.exp(np.minimum(t, cap)) * (1.0 + u * (1.0 + 0.5 * u))
    return float(out) if out.ndim == 0 else out


def safe_exp_deriv(t, cap: float = 30.0):
    """Derivative of :func:`safe_exp` (e^t below the cap, e^cap (1+u) above)."""
    t = np.asarray(t, dtype=float)
    u = np.minimum(np.maximum(t - cap, 0.0), _U_CLAMP)
    out = np.exp(np.minimum(t, cap)) * (1.0 + u)
    return float(out) if out.ndim == 0 else out


@dataclass
class InnerOptions:
    """Options for the inner quasi-Newton solve."""

    grad_tol: float = 1e-10
    max_iters: int = 500
    ls_shrink: float = 0.5
    armijo_c: float = 1e-4
    exp_cap: float = 30.0
    regularization: float = 0.0  # adds (eps/2)|x|^2 to the objective; off by default

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ProblemError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ProblemError("max_iters must be a positive integer")
        if not 0.0 < self.ls_shrink < 1.0:
            raise ProblemError("ls_shrink must lie in (0, 1)")
        if not 0.0 < self.armijo_c < 1.0:
            raise ProblemError("armijo_c must lie in (0, 1)")
        if self.exp_cap <= 0:
            raise ProblemError("exp_cap must be positive")
        if self.regularization < 0:
            raise ProblemError("regularization must be >= 0")


@dataclass(frozen=True)
class MasterEval:
    """One evaluation of the master function: value, x-gradient, barrier factors."""

    value: float
    grad: Array
    per_term: Array


class InnerStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    DIVERGED = "Diverged"


@dataclass
class InnerResult:
    x_star: Array
    grad_norm: float
    iters: int
    status: InnerStatus
    value: float
    initial_grad_norm: float
    value_history: list[float] = field(default_factory=list)


def master_eval(
    p: ProblemSpec, y, x, opts: InnerOptions | None = None
) -> MasterEval:
    """Value and x-gradient of L(x, y), with the exponential safeguard applied.

    Terms with y_k = 0 contribute the constant 1 to the value and nothing to
    the gradient (their constraint is not evaluated).
    """
    opts = opts or InnerOptions()
    if p.eq:
        raise ProblemError("master function is defined for inequality-only problems")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (p.dim_x,):
        raise ProblemError(f"point has shape {x.shape}, expected ({p.dim_x},)")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (p.n_ineq,):
        raise ProblemError(f"multiplier has shape {y.shape}, expected ({p.n_ineq},)")
    if np.any(y < 0):
        raise ProblemError("multipliers must be nonnegative")

    value = p.objective(x)
    grad = p.objective.gradient(x).astype(float)
    if grad.shape != (p.dim_x,):
        raise EvaluationError(f"objective gradient has shape {grad.shape}")
    if opts.regularization > 0.0:
        value += 0.5 * opts.regularization * float(x @ x)
        grad = grad + opts.regularization * x

    per_term = np.ones(p.n_ineq)
    for k, g in enumerate(p.ineq):
        if y[k] == 0.0:
            continue
        t = y[k] * g(x)
        if not np.isfinite(t):
            raise EvaluationError(f"constraint {k} evaluated to a non-finite value", k)
        per_term[k] = safe_exp(t, opts.exp_cap)
        value += per_term[k]
        grad = grad + safe_exp_deriv(t, opts.exp_cap) * y[k] * g.gradient(x)
    value += float(np.sum(y == 0.0))
    return MasterEval(value=float(value), grad=grad, per_term=per_term)


def inner_minimize(
    p: ProblemSpec, y, x0, opts: InnerOptions | None = None
) -> InnerResult:
    """Minimize the master function over x at fixed y.

    BFGS with Armijo backtracking, gradient-only; falls back to steepest
    descent whenever the quasi-Newton direction fails to be a descent
    direction.  Returns Diverged when iterates escape (|x| > 1e10 or the
    value drops below -1e15), which signals a non-coercive master function.
    """
    opts = opts or InnerOptions()
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    ev = master_eval(p, y, x, opts)
    if not np.isfinite(ev.value) or not np.all(np.isfinite(ev.grad)):
        raise EvaluationError("master function is non-finite at the start point")
    f, grad = ev.value, ev.grad
    n = x.size
    initial_grad_norm = float(np.linalg.norm(grad))
    history = [f]

    hess_inv: Array | None = None
    alpha_seed = 1.0  # grows on consecutive full steps to detect escape rays
    status = InnerStatus.MAX_ITERS
    iters = 0

    for _ in range(opts.max_iters):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= opts.grad_tol:
            status = InnerStatus.CONVERGED
            break

        if hess_inv is None:
            direction = -grad
            alpha0 = alpha_seed * min(1.0, 1.0 / max(1.0, grad_norm))
        else:
            direction = -(hess_inv @ grad)
            slope = float(direction @ grad)
            if not np.isfinite(slope) or slope >= 0.0:
                hess_inv = None  # reset: approximation lost positive-definiteness
                direction = -grad
                alpha0 = min(1.0, 1.0 / max(1.0, grad_norm))
            else:
                alpha0 = alpha_seed
        slope = float(direction @ grad)

        alpha = alpha0
        accepted = False
        polish = False
        dir_norm = float(np.linalg.norm(direction))
        # Evaluation noise of the exponential chain is far above one ulp of f
        # (errors in y*g are amplified by exp), so the flat-value band is a
        # generous noise allowance rather than an exact-rounding bound.
        f_resolution = 1e-12 * max(1.0, abs(f))
        while alpha * dir_norm > 1e-20:
            x_new = x + alpha * direction
            ev = master_eval(p, y, x_new, opts)
            if np.isfinite(ev.value):
                if ev.value <= f + opts.armijo_c * alpha * slope and ev.value < f:
                    accepted = True  # measurable Armijo decrease
                    break
                # Once the Armijo decrease is below the resolution of f, value
                # comparisons are noise; a step is then accepted only if it
                # shrinks the gradient, which is what actually polishes x down
                # to grad_tol while leaving f flat at its rounded minimum.
                if ev.value <= f + f_resolution and float(
                    np.linalg.norm(ev.grad)
                ) < grad_norm * (1.0 - 1e-9):
                    accepted = True
                    polish = True
                    break
            alpha *= opts.ls_shrink
        if not accepted:
            if hess_inv is not None:
                # The quasi-Newton direction made no measurable progress;
                # retry from scratch with steepest descent, which always
                # shrinks the gradient near a strictly convex minimum.
                hess_inv = None
                alpha_seed = 1.0
                continue
            break  # no measurable progress at any step length

        iters += 1
        if not np.all(np.isfinite(ev.grad)):
            raise EvaluationError("master gradient is non-finite at an accepted point")
        s = x_new - x
        y_diff = ev.grad - grad
        x, f_prev, f, grad = x_new, f, ev.value, ev.grad
        history.append(f)

        if float(np.linalg.norm(x)) > _X_ESCAPE or f <= _VALUE_ESCAPE:
            status = InnerStatus.DIVERGED
            break

        sy = float(s @ y_diff)
        if not np.all(np.isfinite(y_diff)) or not np.isfinite(sy):
            sy = 0.0  # gradient blew past float range; skip the update
        if polish:
            # Stay with the step scale that worked; full steps overshoot
            # badly when the gradient is already at the noise floor.
            alpha_seed = min(1.0, 2.0 * alpha)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y_diff)):
            if hess_inv is None:
                hess_inv = (sy / float(y_diff @ y_diff)) * np.eye(n)
            rho = 1.0 / sy
            v = np.eye(n) - rho * np.outer(s, y_diff)
            with np.errstate(over="ignore", invalid="ignore"):
                hess_inv = v @ hess_inv @ v.T + rho * np.outer(s, s)
            if not np.all(np.isfinite(hess_inv)):
                hess_inv = None  # curvature overflowed during an escape march
            if not polish:
                alpha_seed = 1.0
        elif polish:
            pass
        elif alpha < alpha0:
            alpha_seed = 1.0
        elif f < f_prev:
            # Flat curvature, a full step accepted and strict descent: likely
            # marching along an escape ray, so grow the trial step to reach
            # the escape test fast.
            alpha_seed = min(alpha_seed * 2.0, 1e12)
        del f_prev

    grad_norm = float(np.linalg.norm(grad))
    return InnerResult(
        x_star=x,
        grad_norm=grad_norm,
        iters=iters,
        status=status,
        value=f,
        initial_grad_norm=initial_grad_norm,
        value_history=history,
    )
