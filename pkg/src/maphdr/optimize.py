"""Dense BFGS with Armijo backtracking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

GRADIENT_TOL = "gradient_tol"
MAX_ITERS = "max_iters"
LINE_SEARCH_FAIL = "line_search_fail"


@dataclass
class OptimizeResult:
    x_opt: np.ndarray
    f_opt: float
    iterations: int
    converged: bool
    reason: str
    f_init: float = float("nan")


def minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, max_iters: int = 100,
             grad_tol: float = 1e-8, c1: float = 1e-4, shrink: float = 0.5,
             max_backtracks: int = 40) -> OptimizeResult:
    """Minimize ``fun`` which returns ``(cost, gradient)`` at a flat parameter vector.

    The inverse Hessian starts at the identity and the update is skipped
    whenever the curvature condition ``s.y > 0`` fails.
    """
    x = np.array(x0, dtype=float).ravel()
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=float).ravel()
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("cost or gradient is not finite at the starting point")
    f_init = f
    n = x.size
    eye = np.eye(n)
    hinv = eye.copy()

    if np.max(np.abs(g), initial=0.0) < grad_tol:
        return OptimizeResult(x, f, 0, True, GRADIENT_TOL, f_init)

    it = 0
    while it < max_iters:
        p = -hinv @ g
        slope = g @ p
        if slope >= 0:
            # lost descent direction; restart from steepest descent
            hinv = eye.copy()
            p = -g
            slope = g @ p
        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * p
            f_new, g_new = fun(x_new)
            f_new = float(f_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope and f_new < f:
                break
            step *= shrink
        else:
            return OptimizeResult(x, f, it, False, LINE_SEARCH_FAIL, f_init)
        it += 1
        g_new = np.asarray(g_new, dtype=float).ravel()
        s = x_new - x
        y = g_new - g
        x, f, g = x_new, f_new, g_new
        if np.max(np.abs(g)) < grad_tol:
            return OptimizeResult(x, f, it, True, GRADIENT_TOL, f_init)
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            rho = 1.0 / sy
            a = eye - rho * np.outer(s, y)
            hinv = a @ hinv @ a.T + rho * np.outer(s, s)
            hinv = 0.5 * (hinv + hinv.T)
    return OptimizeResult(x, f, it, False, MAX_ITERS, f_init)
