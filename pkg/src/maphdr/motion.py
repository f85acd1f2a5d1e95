"""Gaussian pyramids, Horn-Schunck optical flow and backward warping.

Flow convention: ``ref(x) ~ tgt(x + flow(x))`` so that ``warp(tgt, flow)``
aligns the target with the reference.  ``flow`` is an ``(H, W, 2)`` array of
(horizontal, vertical) displacements in pixels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
MIN_LEVEL_SIZE = 16
# automatic flow pyramids stop here; deeper levels alias fine periodic texture
MAX_AUTO_LEVELS = 4


def blur(img: np.ndarray) -> np.ndarray:
    out = convolve1d(np.asarray(img, dtype=float), BINOMIAL5, axis=0, mode="reflect")
    return convolve1d(out, BINOMIAL5, axis=1, mode="reflect")


def downsample(img: np.ndarray) -> np.ndarray:
    return blur(img)[::2, ::2]


def level_shapes(shape: tuple[int, int], levels: int) -> list[tuple[int, int]]:
    """Level sizes from coarse to fine; each level halves (rounding up) the next finer one."""
    shapes = [tuple(shape[:2])]
    for _ in range(levels - 1):
        h, w = shapes[0]
        shapes.insert(0, ((h + 1) // 2, (w + 1) // 2))
    return shapes


def max_levels(shape: tuple[int, int], min_size: int = MIN_LEVEL_SIZE) -> int:
    n = 1
    h, w = shape[:2]
    while min((h + 1) // 2, (w + 1) // 2) >= min_size:
        h, w = (h + 1) // 2, (w + 1) // 2
        n += 1
    return n


def build_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    """Gaussian pyramid indexed coarse to fine; the last entry is the input itself."""
    if levels < 1:
        raise ValueError("pyramid needs at least one level")
    img = np.asarray(img)
    if levels > max_levels(img.shape):
        raise ValueError(f"{levels} levels leave a level smaller than "
                         f"{MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE} for a {img.shape[0]}x{img.shape[1]} image")
    pyr = [img]
    for _ in range(levels - 1):
        pyr.insert(0, downsample(pyr[0]))
    return pyr


def max_pool_pyramid(mask: np.ndarray, levels: int) -> list[np.ndarray]:
    """Binary pyramid where a coarse pixel is set if any of its fine pixels is set."""
    mask = np.asarray(mask, dtype=bool)
    pyr = [mask]
    for _ in range(levels - 1):
        m = pyr[0]
        h, w = m.shape[:2]
        padded = np.zeros(((h + 1) // 2 * 2, (w + 1) // 2 * 2) + m.shape[2:], dtype=bool)
        padded[:h, :w] = m
        coarse = (padded[0::2, 0::2] | padded[1::2, 0::2] | padded[0::2, 1::2] | padded[1::2, 1::2])
        pyr.insert(0, coarse)
    return pyr


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def warp(img: np.ndarray, flow: np.ndarray, return_valid: bool = False):
    """Backward bilinear warp: output(x) = img(x + flow(x)), clamped at the border."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    sx = xs + flow[..., 0]
    sy = ys + flow[..., 1]
    out = _bilinear(img, sx, sy)
    if return_valid:
        valid = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        return out, valid
    return out


def resample(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize so that fine pixel ``i`` samples coarse coordinate ``i / 2``."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    return _bilinear(np.asarray(img, dtype=float), xs / 2.0, ys / 2.0)


def upscale_flow(flow: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Double the resolution of a flow field and its displacements."""
    if shape is None:
        shape = (2 * flow.shape[0], 2 * flow.shape[1])
    return 2.0 * resample(flow, shape)


def upscale_nearest(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    rows = np.minimum(np.arange(h) // 2, img.shape[0] - 1)
    cols = np.minimum(np.arange(w) // 2, img.shape[1] - 1)
    return img[rows][:, cols]


@dataclass(frozen=True)
class FlowParams:
    smoothness: float = 0.02
    sor_iters: int = 100
    omega: float = 1.8
    levels: int | None = None
    warps: int = 2

    def __post_init__(self):
        if not 0 < self.omega < 2:
            raise ValueError("SOR relaxation must lie in (0, 2)")
        if self.smoothness <= 0:
            raise ValueError("smoothness weight must be positive")


def _neighbor_sum(a: np.ndarray) -> np.ndarray:
    s = np.zeros_like(a)
    s[1:] += a[:-1]
    s[:-1] += a[1:]
    s[:, 1:] += a[:, :-1]
    s[:, :-1] += a[:, 1:]
    return s


def _neighbor_count(shape) -> np.ndarray:
    return _neighbor_sum(np.ones(shape))


def hs_energy(du, dv, u0, v0, Ix, Iy, It, smoothness, weight=1.0) -> float:
    """Linearized Horn-Schunck energy of the increment ``(du, dv)`` around ``(u0, v0)``."""
    data = np.sum(weight * (Ix * du + Iy * dv + It) ** 2)
    u = u0 + du
    v = v0 + dv
    smooth = sum(np.sum(np.diff(f, axis=ax) ** 2) for f in (u, v) for ax in (0, 1))
    return float(data + smoothness * smooth)


def sor_solve(Ix, Iy, It, u0, v0, smoothness, iters, omega, energies: list | None = None,
              weight=None):
    """Red-black block SOR on the linearized system; returns the increment ``(du, dv)``.

    ``weight`` scales the data term per pixel; where it is zero the flow is
    filled in by the smoothness term alone.
    """
    h, w = Ix.shape
    c = np.ones((h, w)) if weight is None else np.asarray(weight, dtype=float)
    du = np.zeros((h, w))
    dv = np.zeros((h, w))
    lam_n = smoothness * _neighbor_count((h, w))
    a11 = c * Ix * Ix + lam_n
    a22 = c * Iy * Iy + lam_n
    a12 = c * Ix * Iy
    det = a11 * a22 - a12 * a12
    ys, xs = np.mgrid[0:h, 0:w]
    colors = [((ys + xs) % 2) == c for c in (0, 1)]
    bu0 = -c * Ix * It - lam_n * u0
    bv0 = -c * Iy * It - lam_n * v0
    if energies is not None:
        energies.append(hs_energy(du, dv, u0, v0, Ix, Iy, It, smoothness, c))
    for _ in range(iters):
        for mask in colors:
            bu = bu0 + smoothness * _neighbor_sum(u0 + du)
            bv = bv0 + smoothness * _neighbor_sum(v0 + dv)
            su = (a22 * bu - a12 * bv) / det
            sv = (a11 * bv - a12 * bu) / det
            du = np.where(mask, du + omega * (su - du), du)
            dv = np.where(mask, dv + omega * (sv - dv), dv)
        if energies is not None:
            energies.append(hs_energy(du, dv, u0, v0, Ix, Iy, It, smoothness, c))
    return du, dv


def _flow_level(ref, tgt, flow, params: FlowParams, ref_weight=None, tgt_weight=None):
    u = flow[..., 0].copy()
    v = flow[..., 1].copy()
    gy_r, gx_r = np.gradient(ref)
    for _ in range(params.warps):
        uv = np.stack([u, v], axis=-1)
        tw = warp(tgt, uv)
        gy_t, gx_t = np.gradient(tw)
        Ix = 0.5 * (gx_r + gx_t)
        Iy = 0.5 * (gy_r + gy_t)
        It = tw - ref
        weight = None
        if ref_weight is not None or tgt_weight is not None:
            weight = np.ones_like(ref) if ref_weight is None else ref_weight
            if tgt_weight is not None:
                weight = weight * warp(tgt_weight, uv)
        du, dv = sor_solve(Ix, Iy, It, u, v, params.smoothness, params.sor_iters, params.omega,
                           weight=weight)
        u += du
        v += dv
    return np.stack([u, v], axis=-1)


def estimate_flow(ref: np.ndarray, tgt: np.ndarray, params: FlowParams = FlowParams(),
                  init: np.ndarray | None = None, ref_weight: np.ndarray | None = None,
                  tgt_weight: np.ndarray | None = None) -> np.ndarray:
    """Coarse-to-fine Horn-Schunck flow from ``ref`` to ``tgt`` (2-D arrays).

    The optional weights in ``[0, 1]`` mark how far each image's values can be
    trusted; the data term at a pixel is scaled by the reference weight times
    the warped target weight.
    """
    ref = np.asarray(ref, dtype=float)
    tgt = np.asarray(tgt, dtype=float)
    if ref.shape != tgt.shape or ref.ndim != 2:
        raise ValueError("flow needs two single-channel images of equal size")
    for wgt in (ref_weight, tgt_weight):
        if wgt is not None and np.shape(wgt) != ref.shape:
            raise ValueError("flow weights must match the image size")
    levels = max(1, min(params.levels or MAX_AUTO_LEVELS, max_levels(ref.shape)))

    def pyramid(img):
        if img is None:
            return [None] * levels
        out = [np.asarray(img, dtype=float)]
        for _ in range(levels - 1):
            out.insert(0, downsample(out[0]))
        return out

    ref_pyr = pyramid(ref)
    tgt_pyr = pyramid(tgt)
    rw_pyr = pyramid(ref_weight)
    tw_pyr = pyramid(tgt_weight)
    flow = np.zeros(ref_pyr[0].shape + (2,))
    if init is not None:
        flow = init
        for _ in range(levels - 1):
            flow = 0.5 * downsample(flow)
    for lvl, (r, t) in enumerate(zip(ref_pyr, tgt_pyr)):
        if lvl > 0:
            flow = upscale_flow(flow, r.shape)
        flow = _flow_level(r, t, flow, params, rw_pyr[lvl], tw_pyr[lvl])
    return flow
