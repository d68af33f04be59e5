"""Unconstrained quasi-Newton minimization with backtracking line search.

The model-fitting objectives are smooth but expensive, so the optimizer is
a plain BFGS on (value, gradient) callables: inverse-Hessian updates with a
curvature guard, an Armijo backtracking line search, and escalation rules
for non-finite objective values.  Every accepted step strictly decreases
the objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, OptimizationError

__all__ = ["minimize", "numerical_gradient", "MinimizeResult"]

_ARMIJO_C1 = 1e-4
_BACKTRACK_FACTOR = 0.5
_MAX_BACKTRACKS = 60
_MAX_NONFINITE_REJECTIONS = 30


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    converged: bool
    iterations: int
    n_evals: int
    message: str
    # Objective value at x0 and after each accepted step; never increasing.
    path_values: tuple = ()


def minimize(
    fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0,
    max_iter: int = 200,
    grad_tol: float = 1e-5,
) -> MinimizeResult:
    """Minimize ``fun_and_grad`` starting from ``x0``.

    ``fun_and_grad(x)`` must return ``(value, gradient)``.  Terminates when
    the gradient infinity-norm drops below ``grad_tol`` or after
    ``max_iter`` accepted iterations.  Non-finite objective values during
    the line search reject the step and shrink it; 30 consecutive
    rejections raise :class:`OptimizationError`.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    n_evals = 0
    nonfinite_run = 0

    def evaluate(z):
        nonlocal n_evals, nonfinite_run
        f, g = fun_and_grad(z)
        n_evals += 1
        if np.isfinite(f) and np.all(np.isfinite(g)):
            nonfinite_run = 0
            return float(f), np.asarray(g, dtype=float)
        nonfinite_run += 1
        if nonfinite_run >= _MAX_NONFINITE_REJECTIONS:
            raise OptimizationError(
                f"objective non-finite for {nonfinite_run} consecutive evaluations"
            )
        return np.inf, np.full(n, np.nan)

    f, g = evaluate(x)
    if not np.isfinite(f):
        raise OptimizationError("objective not finite at the starting point")
    path = [f]
    if max_iter == 0:
        return MinimizeResult(x, f, False, 0, n_evals, "max_iter = 0", tuple(path))

    H = np.eye(n)
    first_step = True
    for iteration in range(1, max_iter + 1):
        if np.max(np.abs(g)) < grad_tol:
            return MinimizeResult(
                x, f, True, iteration - 1, n_evals, "gradient below tolerance", tuple(path)
            )

        p = -H @ g
        slope = float(g @ p)
        if slope >= 0.0:
            # Stale curvature produced a non-descent direction; restart.
            H = np.eye(n)
            p = -g
            slope = float(g @ p)
            if slope >= 0.0:
                return MinimizeResult(
                    x, f, False, iteration - 1, n_evals, "zero gradient direction", tuple(path)
                )

        alpha = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            f_new, g_new = evaluate(x + alpha * p)
            if f_new <= f + _ARMIJO_C1 * alpha * slope:
                accepted = True
                break
            alpha *= _BACKTRACK_FACTOR
        if not accepted:
            if not np.array_equal(H, np.eye(n)):
                # One retry along steepest descent before giving up.
                H = np.eye(n)
                p = -g
                slope = float(g @ p)
                alpha = 1.0
                for _ in range(_MAX_BACKTRACKS):
                    f_new, g_new = evaluate(x + alpha * p)
                    if f_new <= f + _ARMIJO_C1 * alpha * slope:
                        accepted = True
                        break
                    alpha *= _BACKTRACK_FACTOR
            if not accepted:
                return MinimizeResult(
                    x, f, False, iteration - 1, n_evals,
                    "line search found no decrease", tuple(path),
                )

        s = alpha * p
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        path.append(f)

        ys = float(y @ s)
        if ys > 1e-10 * np.linalg.norm(y) * np.linalg.norm(s):
            if first_step:
                H = (ys / float(y @ y)) * np.eye(n)
                first_step = False
            rho = 1.0 / ys
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) \
                + rho * (rho * float(y @ Hy) + 1.0) * np.outer(s, s)
            # Algebraically identical to (I - rho s y')H(I - rho y s') + rho s s'.

    converged = bool(np.max(np.abs(g)) < grad_tol)
    return MinimizeResult(x, f, converged, max_iter, n_evals,
                          "gradient below tolerance" if converged else "max iterations reached",
                          tuple(path))


def numerical_gradient(
    objective: Callable[[np.ndarray], float],
    x,
    rel_step: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient with per-coordinate relative steps.

    The step for coordinate i is ``rel_step * max(1, |x_i|)``.  Non-finite
    evaluations raise :class:`NumericalError` naming the coordinate.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = objective(xp)
        fm = objective(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericalError(
                f"objective non-finite when perturbing coordinate {i}"
            )
        grad[i] = (fp - fm) / (2.0 * h)
    return grad
