import numpy as np
import pytest
from hypothesis import given, strategies as st

from maphdr.optimize import GRADIENT_TOL, LINE_SEARCH_FAIL, MAX_ITERS, minimize


def quadratic(c):
    c = np.asarray(c, dtype=float)
    return lambda x: (float(np.sum((x - c) ** 2)), 2.0 * (x - c))


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


class Recorder:
    def __init__(self, fun):
        self.fun = fun
        self.values = []

    def __call__(self, x):
        f, g = self.fun(x)
        self.values.append(f)
        return f, g


def test_quadratic_in_three_iterations():
    res = minimize(quadratic([1, 2, 3]), np.zeros(3))
    assert res.converged and res.reason == GRADIENT_TOL
    assert res.iterations <= 3
    assert np.allclose(res.x_opt, [1, 2, 3], rtol=0, atol=1e-8)


def test_rosenbrock():
    res = minimize(rosenbrock, [-1.2, 1.0], max_iters=100)
    assert res.f_opt < 1e-8
    assert res.iterations <= 100
    assert np.allclose(res.x_opt, [1, 1], atol=1e-3)


def test_zero_iterations():
    x0 = np.array([-1.2, 1.0])
    res = minimize(rosenbrock, x0, max_iters=0)
    assert not res.converged and res.reason == MAX_ITERS
    assert np.array_equal(res.x_opt, x0) and res.iterations == 0


def test_already_stationary():
    res = minimize(quadratic([1.0]), [1.0])
    assert res.converged and res.iterations == 0


def test_non_finite_start():
    with pytest.raises(ValueError, match="not finite"):
        minimize(lambda x: (np.nan, np.zeros_like(x)), [0.0])


def test_line_search_failure_returns_best():
    # the gradient points uphill, so no step along -g can decrease f
    res = minimize(lambda x: (float(x[0]), np.array([-1.0])), [0.0])
    assert res.reason == LINE_SEARCH_FAIL and res.x_opt[0] == 0.0


@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 6))
def test_monotone_decrease_on_convex_quadratics(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    Q = A @ A.T + 0.1 * np.eye(n)
    b = rng.normal(size=n)
    rec = Recorder(lambda x: (0.5 * x @ Q @ x - b @ x, Q @ x - b))
    res = minimize(rec, rng.normal(size=n), max_iters=200, grad_tol=1e-9)
    assert res.f_opt <= res.f_init
    # every accepted iterate lowers f, so the accepted values form a decreasing sequence
    best = np.minimum.accumulate(rec.values)
    assert res.f_opt == best[-1]
    assert np.allclose(res.x_opt, np.linalg.solve(Q, b), atol=1e-6 * (1 + np.abs(np.linalg.solve(Q, b)).max()))
