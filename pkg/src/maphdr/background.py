"""Low-rank background completion and MRF foreground support.

``D`` is a ``K x N`` matrix whose columns are vectorized frames (row-major
over an ``(H, W)`` grid).  :func:`complete_background` minimizes
``0.5 ||P_Omega(D - B)||_F^2 + alpha ||B||_*`` by soft-impute, and the
binary support ``S`` minimizes

    sum_p (1 - s_p) 0.5 m_p (d_p - b_p)^2 + beta s_p + gamma sum_pq W_pq |s_p - s_q|

exactly by an s-t minimum cut.

:func:`decompose` works on log radiance with a per-entry noise model.  Its
background is a per-pixel level shared by all frames (the precision-weighted
mean of the trusted entries) plus a nuclear-norm penalized deviation, and the
support is computed from residuals standardized by their predicted deviation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import maxflow
import numpy as np

log = logging.getLogger(__name__)

PAIRWISE = "pairwise"
LINEAR = "linear"


# noise of rounding to integer codes, the smallest deviation a standardized residual can have
QUANTIZATION_NOISE = 1.0 / np.sqrt(12.0)
# MAD to standard deviation for Gaussian data
_MAD_SCALE = 1.4826

# SVT steps spent checking a rank-restricted solution before trying a higher rank
_POLISH_STEPS = 20


class CompletionError(ValueError):
    pass


@dataclass(frozen=True)
class MrfWeights:
    w_s: float = 20.0
    w_t: float = 20.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if min(self.w_s, self.w_t, self.beta, self.gamma) < 0:
            raise ValueError("MRF weights must be nonnegative")


def svt(Y: np.ndarray, tau: float) -> np.ndarray:
    """Singular value soft-thresholding of a tall matrix.

    Works through the eigendecomposition of the small Gram matrix, which is
    far cheaper than a thin SVD when ``Y`` has only a few columns.
    """
    evals, V = np.linalg.eigh(Y.T @ Y)
    sig = np.sqrt(np.maximum(evals, 0.0))
    shrunk = np.maximum(sig - tau, 0.0)
    keep = shrunk > 0
    if not np.any(keep):
        return np.zeros_like(Y)
    Vk = V[:, keep]
    return (Y @ Vk) * (shrunk[keep] / sig[keep]) @ Vk.T


def _factored_fit(D, omega, alpha, A, G, sweeps, tol):
    """Alternating ridge on ``B = A G^T``; equals the nuclear-norm problem restricted to rank ``A.shape[1]``."""
    K, N = D.shape
    r = A.shape[1]
    ridge = alpha * np.eye(r)
    codes = omega @ (1 << np.arange(N))
    patterns = []
    for code in np.unique(codes):
        cols = np.array([(code >> j) & 1 for j in range(N)], dtype=bool)
        rows = np.nonzero(codes == code)[0]
        patterns.append((rows, cols, D[np.ix_(rows, cols)].T))
    columns = [(omega[:, j], D[omega[:, j], j]) for j in range(N)]
    B = A @ G.T
    done = 0
    for done in range(1, sweeps + 1):
        for rows, cols, d in patterns:
            Gs = G[cols]
            A[rows] = np.linalg.solve(Gs.T @ Gs + ridge, Gs.T @ d).T
        for j, (rows, d) in enumerate(columns):
            As = A[rows]
            G[j] = np.linalg.solve(As.T @ As + ridge, As.T @ d)
        B_new = A @ G.T
        delta = _rel_change(B_new, B)
        B = B_new
        if delta < tol:
            break
    return B, A, G, done


def _rel_change(new, old) -> float:
    num = np.linalg.norm(new - old)
    den = np.linalg.norm(new)
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return float(num / den)


def _soft_impute(D, omega, alpha, B, steps, tol):
    """Accelerated soft-impute with gradient restarts.

    ``res`` is the relative fixed-point residual ``||SVT(P_Omega(D) + P_Omega^c(Y)) - Y|| / ||.||``
    at the extrapolated point ``Y``; the momentum is reset whenever it points uphill.
    """
    res = np.inf
    used = 0
    Y = B
    t = 1.0
    for used in range(1, steps + 1):
        B_new = svt(np.where(omega, D, Y), alpha)
        res = _rel_change(B_new, Y)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if np.sum((Y - B_new) * (B_new - B)) > 0:
            t_new = 1.0
            Y = B_new
        else:
            Y = B_new + ((t - 1.0) / t_new) * (B_new - B)
        B, t = B_new, t_new
        if res < tol:
            break
    return B, res, used


def _completion_objective(D, omega, alpha, B) -> float:
    r = np.where(omega, D - B, 0.0)
    return 0.5 * float(np.sum(r * r)) + alpha * float(np.linalg.svd(B, compute_uv=False).sum())


def complete_background(D: np.ndarray, omega: np.ndarray, alpha: float, max_iters: int = 500,
                        tol: float = 1e-7, B0: np.ndarray | None = None) -> np.ndarray:
    """Minimize ``0.5 ||P_Omega(D - B)||_F^2 + alpha ||B||_*`` over ``K x N`` matrices.

    The answer is a fixed point of soft-impute,
    ``B <- SVT_alpha(P_Omega(D) + P_Omega^c(B))``: iteration stops once the
    relative Frobenius change of one step is below ``tol``.  Plain soft-impute
    crawls when ``alpha`` is small, so each rank ``r = 1..N`` is first solved
    in factored form (alternating ridge regressions) and then polished with
    SVT steps; the first rank whose polish reaches ``tol`` wins.
    ``max_iters`` bounds the total number of sweeps and SVT steps.
    """
    D = np.asarray(D, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    counts = omega.sum(axis=0)
    if np.any(counts == 0):
        raise CompletionError("frame fully ill-exposed or foreground: a column of Omega is empty")
    K, N = D.shape
    observed = np.where(omega, D, 0.0)
    if B0 is None:
        start = np.where(omega, D, observed.sum(axis=0) / counts)
    else:
        start = np.asarray(B0, dtype=float)

    budget = max_iters
    full = min(K, N)
    # cheap first attempt: plain soft-impute often settles quickly from a warm start
    B, res, used = _soft_impute(D, omega, alpha, start, min(budget, _POLISH_STEPS), tol)
    budget -= used
    if res < tol:
        return B
    best, best_obj = B, _completion_objective(D, omega, alpha, B)
    u, s, vt = np.linalg.svd(start, full_matrices=False)
    for r in range(1, full + 1):
        if budget <= 0:
            break
        root = np.sqrt(s[:r])
        A = u[:, :r] * root
        G = vt[:r].T * root
        B, A, G, used = _factored_fit(D, omega, alpha, A, G, max(1, budget // (full - r + 2)), 0.1 * tol)
        budget -= used
        polish = budget if r == full else min(budget, _POLISH_STEPS)
        B, res, used = _soft_impute(D, omega, alpha, B, polish, tol)
        budget -= used
        if res < tol:
            return B
        obj = _completion_objective(D, omega, alpha, B)
        if obj < best_obj:
            best, best_obj = B, obj
        u, s, vt = np.linalg.svd(np.where(omega, D, B), full_matrices=False)
    log.debug("matrix completion hit its iteration cap; returning the lowest objective seen")
    return best


def residual_sigma(D: np.ndarray, B: np.ndarray, omega: np.ndarray) -> float:
    """Sample standard deviation (n - 1) of ``D - B`` over the observed entries."""
    r = (np.asarray(D, dtype=float) - B)[np.asarray(omega, dtype=bool)]
    if r.size < 2:
        raise ValueError("need at least two observed entries for a residual deviation")
    return float(np.std(r, ddof=1))


def _unaries(D, B, M):
    return 0.5 * np.asarray(M, dtype=float) * (np.asarray(D, dtype=float) - B) ** 2


def _grid(X: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """``K x N`` matrix to an ``(N, H, W)`` stack."""
    return np.asarray(X).T.reshape((X.shape[1],) + tuple(shape))


def _degree(shape: tuple[int, int], n_frames: int, w_s: float, w_t: float) -> np.ndarray:
    h, w = shape
    deg = np.zeros((n_frames, h, w))
    deg[:, 1:, :] += w_s
    deg[:, :-1, :] += w_s
    deg[:, :, 1:] += w_s
    deg[:, :, :-1] += w_s
    deg[1:] += w_t
    deg[:-1] += w_t
    return deg


def support_energy(S, D, B, M, shape, weights: MrfWeights, prior: str = PAIRWISE) -> float:
    """Energy of a binary support under the pairwise or literal linear prior."""
    S = np.asarray(S, dtype=float)
    unary = np.sum((1.0 - S) * _unaries(D, B, M)) + weights.beta * S.sum()
    s = _grid(S, shape)
    if prior == LINEAR:
        deg = _degree(shape, s.shape[0], weights.w_s, weights.w_t)
        return float(unary + weights.gamma * np.sum(deg * s))
    pair = weights.w_s * (np.abs(np.diff(s, axis=1)).sum() + np.abs(np.diff(s, axis=2)).sum())
    pair += weights.w_t * np.abs(np.diff(s, axis=0)).sum()
    return float(unary + weights.gamma * pair)


def update_support(D, B, M, shape: tuple[int, int], weights: MrfWeights,
                   prior: str = PAIRWISE) -> np.ndarray:
    """Exact minimizer of :func:`support_energy` as a boolean ``K x N`` matrix."""
    D = np.asarray(D, dtype=float)
    cost0 = _grid(_unaries(D, B, M), shape)
    n = cost0.shape[0]
    if prior == LINEAR:
        deg = _degree(shape, n, weights.w_s, weights.w_t)
        s = cost0 > weights.beta + weights.gamma * deg
        return s.reshape(n, -1).T.copy()
    if prior != PAIRWISE:
        raise ValueError(f"unknown support prior {prior!r}")

    g = maxflow.Graph[float]()
    ids = g.add_grid_nodes(cost0.shape)
    ws = weights.gamma * weights.w_s
    wt = weights.gamma * weights.w_t
    if ws > 0:
        spatial = np.zeros((3, 3, 3))
        spatial[1, 1, 2] = spatial[1, 2, 1] = ws
        g.add_grid_edges(ids, weights=1.0, structure=spatial, symmetric=True)
    if wt > 0 and n > 1:
        temporal = np.zeros((3, 3, 3))
        temporal[2, 1, 1] = wt
        g.add_grid_edges(ids, weights=1.0, structure=temporal, symmetric=True)
    # a node on the sink side takes label 1 and pays its source capacity
    g.add_grid_tedges(ids, np.full(cost0.shape, weights.beta), cost0)
    g.maxflow()
    s = g.get_grid_segments(ids)
    return s.reshape(n, -1).T.copy()


def objective(D, B, S, M, shape, alpha: float, weights: MrfWeights, prior: str = PAIRWISE) -> float:
    """Background/support objective: data fit on Omega, nuclear norm, sparsity, smoothness."""
    nuc = np.linalg.svd(B, compute_uv=False).sum()
    return support_energy(S, D, B, M, shape, weights, prior) + alpha * float(nuc)


def _precision(D, precision):
    if precision is None:
        return np.ones(D.shape)
    P = np.asarray(precision, dtype=float)
    if P.shape != D.shape:
        raise ValueError("precision must match D")
    if np.any(~np.isfinite(P)) or np.any(P <= 0):
        raise ValueError("precision must be finite and positive")
    return P


def background_level(D, omega, precision=None, M=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-row precision-weighted mean of the trusted entries.

    Rows with no entry in ``omega`` fall back to the well-exposed entries in
    ``M`` and then to all entries.  Returns the level and the rows seen in ``omega``.
    """
    D = np.asarray(D, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    P = _precision(D, precision)
    seen = omega.any(axis=1)
    use = omega.copy()
    if M is not None:
        use[~seen] = np.asarray(M, dtype=bool)[~seen]
    use[~use.any(axis=1)] = True
    Pw = np.where(use, P, 0.0)
    return (Pw * D).sum(axis=1) / Pw.sum(axis=1), seen


def standardized_residual(D, B, omega, M, precision=None) -> tuple[np.ndarray, np.ndarray]:
    """Residuals divided by their predicted deviation, and the entries that carry information.

    On ``omega`` the deviation accounts for the leverage ``h = p / sum(p)`` of
    the level fit, so an entry that is the only observation of its row has no
    residual freedom and is returned as zero.  Off ``omega`` but inside ``M``
    the entry did not enter the fit and is scaled by its precision alone.
    """
    D = np.asarray(D, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    M = np.asarray(M, dtype=bool)
    P = _precision(D, precision)
    Pw = np.where(omega, P, 0.0)
    total = Pw.sum(axis=1, keepdims=True)
    h = np.divide(Pw, total, out=np.zeros_like(Pw), where=total > 0)
    free = omega & (h < 1.0 - 1e-9)
    scale = np.sqrt(P / np.where(free, 1.0 - h, 1.0))
    R = np.where(free | (M & ~omega), (D - B) * scale, 0.0)
    return R, free


def noise_sigma(D, M, precision=None, floor: float = QUANTIZATION_NOISE) -> float:
    """Robust standardized noise level of ``D`` before any background fit.

    Median absolute residual of the level fit with no support, so a sparse
    foreground barely moves it, floored at ``floor``.
    """
    D = np.asarray(D, dtype=float)
    M = np.asarray(M, dtype=bool)
    P = _precision(D, precision)
    level, _ = background_level(D, M, P, M)
    R, free = standardized_residual(D, level[:, None], M, M, P)
    sigma = _MAD_SCALE * float(np.median(np.abs(R[free]))) if free.any() else 0.0
    return max(sigma, floor)


def noise_edge(D, M, precision=None, floor: float = QUANTIZATION_NOISE) -> float:
    """Largest singular value expected from pure noise, in the units of ``D``.

    The standardized level from :func:`noise_sigma` is mapped back through
    the median predicted deviation.
    """
    D = np.asarray(D, dtype=float)
    M = np.asarray(M, dtype=bool)
    P = _precision(D, precision)
    sigma = noise_sigma(D, M, P, floor)
    spread = float(np.median(1.0 / np.sqrt(P[M]))) if M.any() else 1.0
    K, N = D.shape
    return sigma * spread * (np.sqrt(K) + np.sqrt(N))


def fit_background(D, omega, alpha: float, precision=None, M=None, max_iters: int = 500,
                   tol: float = 1e-7) -> tuple[np.ndarray, np.ndarray]:
    """Shared level plus a nuclear-norm penalized deviation, ``alpha`` in the units of ``D``.

    Returns the background and the rows that had at least one entry in ``omega``.
    """
    D = np.asarray(D, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    level, seen = background_level(D, omega, precision, M)
    deviation = complete_background(D - level[:, None], omega, alpha, max_iters, tol)
    return level[:, None] + deviation, seen


@dataclass
class Decomposition:
    D: np.ndarray
    B: np.ndarray
    S: np.ndarray
    M: np.ndarray
    iterations: int
    sigma: float
    weights: MrfWeights
    history: list[float] = field(default_factory=list)
    seen: np.ndarray | None = None  # rows with a trusted background observation
    scale: float = 1.0  # noise edge that ``alpha`` was multiplied by

    @property
    def omega(self) -> np.ndarray:
        return self.M & ~self.S


def decompose(D, M, shape: tuple[int, int], alpha: float = 0.5, w_s: float = 20.0, w_t: float = 20.0,
              beta_scale: float = 0.5, gamma_scale: float = 1.0, outer_iters: int = 10,
              prior: str = PAIRWISE, fixed_weights: MrfWeights | None = None,
              mc_iters: int = 500, mc_tol: float = 1e-7, callback=None,
              precision=None, noise_floor: float = QUANTIZATION_NOISE) -> Decomposition:
    """Alternate background fitting and support estimation from ``S = 0``.

    ``precision`` holds the inverse noise variance of each entry of ``D``
    (uniform when omitted).  ``alpha`` is measured in units of the noise
    edge from :func:`noise_edge`, so ``alpha >= 1`` leaves pure noise out of
    the deviation term.  ``beta = beta_scale * sigma^2`` and
    ``gamma = gamma_scale * beta`` are refreshed every outer iteration from
    the deviation of the standardized residuals on Omega, never below the
    pre-fit level of :func:`noise_sigma`, unless ``fixed_weights`` pins them.
    The loop ends when the support stops changing or after ``outer_iters``
    iterations.
    """
    D = np.asarray(D, dtype=float)
    M = np.asarray(M, dtype=bool)
    if D.shape != M.shape:
        raise ValueError("D and M must have the same shape")
    if D.shape[0] != shape[0] * shape[1]:
        raise ValueError(f"D has {D.shape[0]} rows, grid {shape} has {shape[0] * shape[1]} pixels")
    P = _precision(D, precision)
    scale = noise_edge(D, M, P, noise_floor)
    # the fitted background absorbs part of the noise, so the residual spread
    # alone underestimates it and would let the support grow without bound
    sigma_floor = noise_sigma(D, M, P, noise_floor)
    S = np.zeros_like(M)
    B = seen = None
    history = []
    sigma = float("nan")
    weights = fixed_weights
    it = 0
    for it in range(1, outer_iters + 1):
        omega = M & ~S
        B, seen = fit_background(D, omega, alpha * scale, P, M, mc_iters, mc_tol)
        R, free = standardized_residual(D, B, omega, M, P)
        sigma = residual_sigma(R, np.zeros_like(R), free) if free.sum() >= 2 else 0.0
        sigma = max(sigma, sigma_floor)
        if fixed_weights is None:
            beta = beta_scale * sigma ** 2
            weights = MrfWeights(w_s, w_t, beta, gamma_scale * beta)
        zero = np.zeros_like(R)
        S_new = update_support(R, zero, M, shape, weights, prior)
        history.append(support_energy(S_new, R, zero, M, shape, weights, prior))
        if callback is not None:
            callback(it, B, S_new, M & ~S_new)
        changed = np.any(S_new != S)
        S = S_new
        log.debug("outer iteration %d: sigma=%.4g support=%d", it, sigma, int(S.sum()))
        if not changed:
            break
    return Decomposition(D, B, S, M, it, sigma, weights, history, seen, scale)
