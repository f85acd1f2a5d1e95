"""Locally adaptive kernel regression with optimized steering matrices.

Each foreground pixel is estimated from a ``P x P x 3`` spatio-temporal block
of boosted, gamma-adjusted values.  The kernel is the unnormalized Gaussian
``exp(-||R u||^2 / 2)`` with ``R`` upper triangular, so ``H = R^T R`` is
positive semidefinite without constraints.  ``R`` is chosen by minimizing

    C(R) = (y - X b)^T L (y - X b) + (y - t)^T Lt (y - t) + eps ||b||^2 + lam ||R||_F^2

where ``b`` is the ridge solution for the current weights,
``L = diag(K_i nu_i)`` and ``Lt = diag(K_i (1 - nu_i))``.

Blocks may be expressed relative to an anchor value (by default the
reference observation at the center), so the ridge term shrinks the fit
towards that value instead of towards zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .imaging import ResponseCurve, boosted_to_radiance
from .optimize import minimize

log = logging.getLogger(__name__)

TRIU = np.triu_indices(3)
# sum of radiometric weights below which a block is treated as fully ill-exposed
DEGENERATE_NU = 1e-9
# what the ridge shrinks towards: the center's reference observation, or zero
ANCHOR_CENTER = "center"
ANCHOR_ZERO = "zero"
# which side the intensity-consistency weight penalizes: "extend" lets a clipped
# center reach past its clip level, "literal" applies the one-sided formula as written
OMEGA_EXTEND = "extend"
OMEGA_LITERAL = "literal"


@dataclass(frozen=True)
class RegressionConfig:
    block_size: int = 7
    order: int = 1
    tikhonov: float = 0.1
    steering_reg: float = 0.01
    kappa: float = 10.0
    bfgs_iters: int = 10
    grad_tol: float = 1e-8
    anchor: str = ANCHOR_CENTER
    omega_side: str = OMEGA_EXTEND

    def __post_init__(self):
        if self.omega_side not in (OMEGA_EXTEND, OMEGA_LITERAL):
            raise ValueError(f"omega_side must be {OMEGA_EXTEND} or {OMEGA_LITERAL}")
        if self.anchor not in (ANCHOR_CENTER, ANCHOR_ZERO):
            raise ValueError(f"anchor must be {ANCHOR_CENTER} or {ANCHOR_ZERO}")
        if self.order != 1:
            raise ValueError("only linear (order 1) regression is supported")
        if self.block_size < 1 or self.block_size % 2 == 0:
            raise ValueError("block_size must be a positive odd integer")
        if not (self.tikhonov >= 0 and self.steering_reg >= 0 and self.kappa > 0):
            raise ValueError("tikhonov, steering_reg must be >= 0 and kappa > 0")
        if self.bfgs_iters < 0:
            raise ValueError("bfgs_iters must be >= 0")

    @property
    def radius(self) -> int:
        return self.block_size // 2


@dataclass
class LocalBlock:
    """Samples around one pixel: offsets ``(P, 3)`` as (dx, dy, dt), values and weights."""

    offsets: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    target: float
    values: np.ndarray | None = None  # (P, C) per-channel values for the final fit
    anchor: np.ndarray | float = 0.0  # per-channel anchor of ``values``
    anchor_y: float = 0.0  # anchor of ``y`` and ``target``
    _X: np.ndarray = field(init=False, repr=False)
    _outer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)
        self._X = design_matrix(self.offsets)
        self._outer = np.einsum("pi,pj->pij", self.offsets, self.offsets)


def design_matrix(offsets: np.ndarray, order: int = 1) -> np.ndarray:
    """Rows ``[1, dx, dy, dt]`` of the local linear basis."""
    if order != 1:
        raise ValueError("only order 1 is supported")
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    return np.hstack([np.ones((offsets.shape[0], 1)), offsets])


def eval_kernel(R: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Unnormalized steering kernel ``exp(-||R u||^2 / 2)`` for one or many offsets."""
    ru = np.asarray(u, dtype=float) @ np.asarray(R, dtype=float).T
    return np.exp(-0.5 * np.sum(ru * ru, axis=-1))


def omega_weight(y_i, y_c, phi_c, kappa: float, frame_is_long: bool):
    """One-sided intensity consistency with the center sample.

    With ``frame_is_long`` samples brighter than the center are penalized,
    otherwise darker ones.
    """
    sigma = kappa * (1.0 - np.asarray(phi_c, dtype=float))
    diff = np.asarray(y_i, dtype=float) - y_c
    if not frame_is_long:
        diff = -diff
    return np.exp(-sigma * np.maximum(diff, 0.0) ** 2)


def solve_ridge(X: np.ndarray, weights: np.ndarray, y: np.ndarray, eps: float) -> np.ndarray:
    """Closed-form ``(X^T L X + eps I)^-1 X^T L y`` for diagonal ``L``.

    ``weights`` is the diagonal of ``L`` (a full diagonal matrix is accepted).
    ``y`` may carry several right-hand sides as columns.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim == 2:
        w = np.diag(w)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    xw = X.T * w
    A = xw @ X
    if eps:
        A = A + eps * np.eye(X.shape[1])
    try:
        return np.linalg.solve(A, xw @ y)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("ridge normal matrix is singular") from exc


def _terms(R: np.ndarray, block: LocalBlock, config: RegressionConfig):
    K = eval_kernel(R, block.offsets)
    k = K * block.nu
    kt = K * (1.0 - block.nu)
    beta = solve_ridge(block._X, k, block.y, config.tikhonov)
    z = block.y - block._X @ beta
    zt = block.y - block.target
    return k, kt, beta, z, zt


def steering_cost(R: np.ndarray, block: LocalBlock, config: RegressionConfig) -> float:
    R = np.asarray(R, dtype=float)
    k, kt, beta, z, zt = _terms(R, block, config)
    return float(k @ (z * z) + kt @ (zt * zt) + config.tikhonov * beta @ beta
                 + config.steering_reg * np.sum(R * R))


def steering_cost_and_gradient(R: np.ndarray, block: LocalBlock, config: RegressionConfig):
    """Cost and its upper-triangular gradient with respect to ``R``.

    The ridge coefficients are optimal for the current weights, so the
    derivative of the fitted part through ``b`` vanishes and only the
    explicit kernel dependence remains:
    ``dC/dR = -R sum_i (k_i z_i^2 + kt_i zt_i^2) u_i u_i^T + 2 lam R``.
    """
    R = np.asarray(R, dtype=float)
    k, kt, beta, z, zt = _terms(R, block, config)
    c = k * z * z + kt * zt * zt
    cost = float(c.sum() + config.tikhonov * beta @ beta + config.steering_reg * np.sum(R * R))
    S = np.tensordot(c, block._outer, axes=1)
    grad = -R @ S + 2.0 * config.steering_reg * R
    return cost, np.triu(grad)


def steering_gradient(R: np.ndarray, block: LocalBlock, config: RegressionConfig) -> np.ndarray:
    return steering_cost_and_gradient(R, block, config)[1]


def r_from_params(x: np.ndarray) -> np.ndarray:
    R = np.zeros((3, 3))
    R[TRIU] = x
    return R


@dataclass
class PixelFit:
    beta: np.ndarray  # (4,) or (4, C) coefficients relative to the anchor
    R: np.ndarray
    cost: float
    iterations: int
    fallback: bool = False
    degenerate: bool = False
    anchor: np.ndarray | float = 0.0

    @property
    def value(self) -> np.ndarray:
        return np.atleast_1d(self.beta[0] + self.anchor)


def fit_block(block: LocalBlock, R_init: np.ndarray, config: RegressionConfig) -> PixelFit:
    """Optimize the steering matrix for one block and return the ridge fit at the optimum."""
    R_init = np.triu(np.asarray(R_init, dtype=float))
    values = block.y if block.values is None else block.values
    if block.nu.sum() < DEGENERATE_NU:
        beta = np.zeros((4,) + values.shape[1:])
        beta[0] = block.target
        return PixelFit(beta, R_init, float("nan"), 0, degenerate=True, anchor=block.anchor_y)

    def fun(x):
        return steering_cost_and_gradient(r_from_params(x), block, config)

    R = R_init
    iterations = 0
    fallback = False
    if config.bfgs_iters > 0:
        try:
            res = minimize(lambda x: _flat(fun(x)), R_init[TRIU], max_iters=config.bfgs_iters,
                           grad_tol=config.grad_tol)
            if np.isfinite(res.f_opt):
                R = r_from_params(res.x_opt)
                iterations = res.iterations
            else:
                fallback = True
        except (ValueError, np.linalg.LinAlgError):
            fallback = True
        if fallback:
            log.debug("steering optimization failed; using the initial kernel")
    K = eval_kernel(R, block.offsets)
    beta = solve_ridge(block._X, K * block.nu, values, config.tikhonov)
    anchor = block.anchor_y if block.values is None else block.anchor
    return PixelFit(beta, R, steering_cost(R, block, config), iterations, fallback, anchor=anchor)


def _flat(cg):
    cost, grad = cg
    return cost, grad[TRIU]


def saturation_target(crf: ResponseCurve, gamma: float, reference_long: bool) -> float:
    """Boosted-domain value that ill-exposed samples are pulled towards."""
    code = crf.z_max - crf.z_th if reference_long else crf.z_th
    return (code / crf.z_max) ** (1.0 / gamma)


@dataclass
class BlockSource:
    """Boosted data for a three-frame window at one resolution.

    ``values`` is ``(3, H, W, C)`` in the boosted domain of the reference
    exposure, ``lum`` its luminance ``(3, H, W)``, ``phi`` the exposedness of
    each source pixel ``(3, H, W)``.  Frame 1 is the reference.
    """

    values: np.ndarray
    lum: np.ndarray
    phi: np.ndarray
    reference_long: bool
    target: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.lum.shape[1:]


def gather_block(source: BlockSource, row: int, col: int, config: RegressionConfig) -> LocalBlock:
    """Collect the block around ``(row, col)``, truncated at the frame border."""
    h, w = source.shape
    r = config.radius
    r0, r1 = max(row - r, 0), min(row + r + 1, h)
    c0, c1 = max(col - r, 0), min(col + r + 1, w)
    dy, dx = np.mgrid[r0 - row:r1 - row, c0 - col:c1 - col]
    n = dy.size
    offsets = np.empty((3 * n, 3))
    for f in range(3):
        offsets[f * n:(f + 1) * n, 0] = dx.ravel()
        offsets[f * n:(f + 1) * n, 1] = dy.ravel()
        offsets[f * n:(f + 1) * n, 2] = f - 1
    lum = source.lum[:, r0:r1, c0:c1].reshape(-1)
    phi = source.phi[:, r0:r1, c0:c1].reshape(-1)
    values = source.values[:, r0:r1, c0:c1, :].reshape(3 * n, -1)
    y_c = source.lum[1, row, col]
    phi_c = source.phi[1, row, col]
    penalize_brighter = source.reference_long == (config.omega_side == OMEGA_LITERAL)
    nu = phi * omega_weight(lum, y_c, phi_c, config.kappa, penalize_brighter)
    if config.anchor == ANCHOR_ZERO:
        return LocalBlock(offsets, lum, nu, source.target, values)
    center = source.values[1, row, col, :]
    return LocalBlock(offsets, lum - y_c, nu, source.target - y_c, values - center, anchor_y=float(y_c),
                      anchor=center.copy())


@dataclass
class PixelEstimate:
    radiance: np.ndarray
    boosted: np.ndarray
    R: np.ndarray
    iterations: int
    fallback: bool
    degenerate: bool


def estimate_pixel(source: BlockSource, row: int, col: int, R_init: np.ndarray,
                   config: RegressionConfig, crf: ResponseCurve, exposure_s: float,
                   gamma: float) -> PixelEstimate:
    """Estimate the reference value at one pixel and return it as radiance."""
    block = gather_block(source, row, col, config)
    fit = fit_block(block, R_init, config)
    boosted = np.maximum(fit.value, 0.0)
    radiance = boosted_to_radiance(boosted[None, None, :], crf.for_channels(boosted.size),
                                   exposure_s, gamma)[0, 0]
    if fit.degenerate:
        log.debug("block at (%d, %d) has no usable samples", row, col)
    return PixelEstimate(radiance, boosted, fit.R, fit.iterations, fit.fallback, fit.degenerate)
