"""Numerical self-checks for the regression core: steering gradients and the ridge solver.

Shared by the ``kr-selftest`` command, the test suite and ``scripts/gradient_check.py``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .regression import TRIU, LocalBlock, RegressionConfig, r_from_params, solve_ridge, steering_cost, \
    steering_cost_and_gradient

FD_STEP = 1e-5


def random_block(rng: np.random.Generator, block_size: int = 7) -> LocalBlock:
    """A full ``P x P x 3`` block with random values, weights and saturation target."""
    r = block_size // 2
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    offsets = np.concatenate([np.stack([dx.ravel(), dy.ravel(), np.full(dx.size, t)], axis=1)
                              for t in (-1, 0, 1)]).astype(float)
    n = len(offsets)
    return LocalBlock(offsets, rng.uniform(0.0, 1.0, n), rng.uniform(0.0, 1.0, n), float(rng.uniform(0.0, 1.0)))


def random_steering(rng: np.random.Generator) -> np.ndarray:
    """Upper-triangular R with a kernel width between roughly one and three pixels."""
    R = np.triu(rng.normal(0.0, 0.2, (3, 3)))
    R[np.diag_indices(3)] = rng.uniform(0.3, 1.0, 3)
    return R


def finite_difference(R: np.ndarray, block: LocalBlock, config: RegressionConfig,
                      step: float = FD_STEP) -> np.ndarray:
    x0 = R[TRIU]
    out = np.zeros_like(x0)
    for i in range(x0.size):
        e = np.zeros_like(x0)
        e[i] = step
        out[i] = (steering_cost(r_from_params(x0 + e), block, config)
                  - steering_cost(r_from_params(x0 - e), block, config)) / (2 * step)
    return out


def relative_error(a: np.ndarray, b: np.ndarray, tiny: float = 1e-12) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|)``; pairs that are both below ``tiny`` count as exact."""
    scale = np.maximum(np.abs(a), np.abs(b))
    return np.where(scale > tiny, np.abs(a - b) / np.maximum(scale, tiny), 0.0)


@dataclass
class CheckReport:
    name: str
    instances: int
    worst: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance


def gradient_check(instances: int = 100, seed: int = 0, block_size: int = 7,
                   config: RegressionConfig | None = None) -> CheckReport:
    """Analytic steering gradients against central differences on random blocks."""
    t0 = time.perf_counter()
    config = config or RegressionConfig(block_size=block_size)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        block = random_block(rng, block_size)
        R = random_steering(rng)
        grad = steering_cost_and_gradient(R, block, config)[1][TRIU]
        worst = max(worst, float(relative_error(grad, finite_difference(R, block, config)).max()))
    return CheckReport("steering gradient", instances, worst, 1e-5, time.perf_counter() - t0)


def ridge_reference(X: np.ndarray, weights: np.ndarray, y: np.ndarray, eps: float) -> np.ndarray:
    """Ridge solution from least squares on the stacked system ``[sqrt(L) X; sqrt(eps) I]``."""
    sw = np.sqrt(weights)
    A = np.vstack([X * sw[:, None], np.sqrt(eps) * np.eye(X.shape[1])])
    rhs = np.concatenate([y * sw, np.zeros(X.shape[1])])
    return scipy.linalg.lstsq(A, rhs)[0]


def ridge_check(instances: int = 1000, seed: int = 0) -> CheckReport:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(4, 148))
        X = np.hstack([np.ones((n, 1)), rng.normal(0.0, 3.0, (n, 3))])
        w = rng.uniform(0.0, 1.0, n)
        y = rng.normal(size=n)
        eps = float(rng.uniform(0.01, 1.0))
        got = solve_ridge(X, w, y, eps)
        ref = ridge_reference(X, w, y, eps)
        worst = max(worst, float(np.max(np.abs(got - ref)) / max(np.max(np.abs(ref)), 1.0)))
    return CheckReport("ridge solve", instances, worst, 1e-10, time.perf_counter() - t0)
