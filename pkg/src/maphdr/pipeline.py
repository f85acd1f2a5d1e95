"""Per-frame HDR synthesis over a sliding three-frame window."""
from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import motion
from .background import decompose, fit_background, noise_edge
from .config import RunConfig
from .imaging import (IrradianceFrame, LdrFrame, ResponseCurve, inverse_response, log_noise_std,
                      luminance, phi_of_codes, phi_weight, radiance_to_boosted, tag_exposures, well_exposed_mask)
from .regression import BlockSource, estimate_pixel, saturation_target

log = logging.getLogger(__name__)


@dataclass
class SynthesisJob:
    frames: list[LdrFrame]
    crf: ResponseCurve
    config: RunConfig = field(default_factory=RunConfig)
    reference_index: int = 1

    def __post_init__(self):
        n = len(self.frames)
        if n < 2:
            raise ValueError("synthesis needs at least two frames")
        if not 0 <= self.reference_index < n:
            raise ValueError(f"reference index {self.reference_index} outside 0..{n - 1}")
        shapes = {f.data.shape for f in self.frames}
        if len(shapes) != 1:
            raise ValueError("all frames must share one shape")
        exps = [f.exposure_s for f in self.frames]
        if any(a == b for a, b in zip(exps, exps[1:])):
            warnings.warn("exposure times do not alternate", stacklevel=2)
        if self.config.z_th and self.config.z_th != self.crf.z_th:
            self.crf = ResponseCurve(self.crf.table, self.config.z_th, self.crf.z_max)

    def window(self) -> list[int]:
        """Frame indices r-1, r, r+1 with the reference repeated at sequence ends."""
        r, n = self.reference_index, len(self.frames)
        return [max(r - 1, 0) if r > 0 else r, r, min(r + 1, n - 1) if r < n - 1 else r]

    def long_flags(self) -> list[bool]:
        tags = tag_exposures([f.exposure_s for f in self.frames])
        return [t if f.long_exposure is None else bool(f.long_exposure)
                for f, t in zip(self.frames, tags)]


@dataclass
class FrameStats:
    reference_index: int
    seconds: float = 0.0
    outer_iterations: int = 0
    sigma: float = float("nan")
    support_pixels: int = 0
    regression_pixels: int = 0
    bfgs_iterations: int = 0
    fallbacks: int = 0
    unseen: int = 0
    degenerate: int = 0
    flow_calls: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class FrameResult:
    irradiance: IrradianceFrame
    support: np.ndarray  # (H, W) foreground support of the reference frame
    background: np.ndarray  # (H, W, C) background radiance of the reference frame
    stats: FrameStats


def support_pyramid(S: np.ndarray, levels: int) -> list[np.ndarray]:
    """Binary pyramid, coarse to fine, where a coarse pixel is set if any fine pixel is."""
    return motion.max_pool_pyramid(S, levels)


def _columns(images: list[np.ndarray]) -> np.ndarray:
    return np.stack([im.reshape(-1) for im in images], axis=1)


def decomposition_inputs(frames: list[LdrFrame], crf: ResponseCurve) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log-luminance matrix ``D``, well-exposed mask ``M`` and precisions of a frame window.

    Log radiance puts every exposure on the same scale; the precision of an
    entry is the inverse square of the log deviation caused by one code.
    """
    rad = [inverse_response(f, crf).data for f in frames]
    D = np.log(_columns([luminance(r) for r in rad]))
    M = _columns([well_exposed_mask(f, crf) for f in frames])
    P = _columns([log_noise_std(f, crf) for f in frames]) ** -2.0
    return D, M, P


def _range_weight(boosted: np.ndarray, crf: ResponseCurve, gamma: float) -> np.ndarray:
    """Exposedness of a boosted image on both ends of the code range, worst channel."""
    z = crf.z_max * np.maximum(boosted, 0.0) ** gamma
    lo = phi_of_codes(z, crf.z_th, crf.z_max, long_exposure=False)
    hi = phi_of_codes(z, crf.z_th, crf.z_max, long_exposure=True)
    return np.minimum(lo, hi).min(axis=-1)


def _debug_callback(debug_dir: Path | None, shape, tag: str):
    if debug_dir is None:
        return None
    from .io import write_mask_png, write_pfm_file
    debug_dir.mkdir(parents=True, exist_ok=True)

    def dump(it, B, S, omega):
        for j in range(S.shape[1]):
            stem = debug_dir / f"{tag}_it{it:02d}_col{j}"
            write_mask_png(f"{stem}_S.png", S[:, j].reshape(shape))
            write_mask_png(f"{stem}_omega.png", omega[:, j].reshape(shape))
            write_pfm_file(f"{stem}_B.pfm", B[:, j].reshape(shape + (1,)))
    return dump


def synthesize_frame(job: SynthesisJob, debug_dir: str | Path | None = None) -> FrameResult:
    """Synthesize the HDR reference frame of ``job``."""
    t0 = time.perf_counter()
    cfg = job.config
    crf = job.crf
    win = job.window()
    frames = [job.frames[i] for i in win]
    longs = [job.long_flags()[i] for i in win]
    ref = frames[1]
    dt_ref = ref.exposure_s
    h, w, c = ref.data.shape
    stats = FrameStats(job.reference_index)

    rad = [inverse_response(f, crf).data for f in frames]
    D, M, P = decomposition_inputs(frames, crf)

    dbg = _debug_callback(Path(debug_dir) if debug_dir else None, (h, w), f"frame{job.reference_index:04d}")
    dec = decompose(D, M, (h, w), alpha=cfg.alpha, w_s=cfg.w_s, w_t=cfg.w_t,
                    beta_scale=cfg.beta_scale, gamma_scale=cfg.gamma_scale,
                    outer_iters=cfg.outer_iters, prior=cfg.support_prior,
                    mc_iters=cfg.mc_iters, mc_tol=cfg.mc_tol, callback=dbg, precision=P)
    stats.outer_iterations = dec.iterations
    stats.sigma = dec.sigma
    omega = dec.omega
    stats.unseen = int((~dec.seen).sum())

    # per-channel background with the support held fixed
    background = np.empty((h, w, c))
    for ch in range(c):
        Dc = np.log(_columns([r[..., ch] for r in rad]))
        Pc = _columns([log_noise_std(f, crf, ch) for f in frames]) ** -2.0
        edge = noise_edge(Dc, M, Pc)
        Bc, _ = fit_background(Dc, omega, cfg.alpha * edge, Pc, M, cfg.mc_iters, cfg.mc_tol)
        background[..., ch] = np.exp(Bc[:, 1]).reshape(h, w)

    support = dec.S[:, 1].reshape(h, w)
    stats.support_pixels = int(support.sum())

    boosted = [radiance_to_boosted(r, crf, dt_ref, cfg.gamma) for r in rad]
    phis = [phi_weight(f, crf, lg).phi for f, lg in zip(frames, longs)]
    L = cfg.levels
    pyr_y = [motion.build_pyramid(b, L) for b in boosted]
    pyr_phi = [motion.build_pyramid(p, L) for p in phis]
    pyr_B = motion.build_pyramid(background, L)
    pyr_S = support_pyramid(support, L)
    rcfg = cfg.regression()
    fparams = cfg.flow()
    target = saturation_target(crf, cfg.gamma, longs[1])

    shape0 = pyr_S[0].shape
    flows = [np.zeros(shape0 + (2,)), np.zeros(shape0 + (2,))]
    R_state = np.broadcast_to(np.eye(3), shape0 + (3, 3)).copy()
    composite = pyr_B[0]
    for lvl in range(L):
        shape = pyr_S[lvl].shape
        if lvl > 0:
            flows = [motion.upscale_flow(f, shape) for f in flows]
            R_state = motion.upscale_nearest(R_state, shape).copy()
            values = np.stack([motion.warp(pyr_y[0][lvl], flows[0]), pyr_y[1][lvl],
                               motion.warp(pyr_y[2][lvl], flows[1])])
            phi = np.stack([motion.warp(pyr_phi[0][lvl], flows[0]), pyr_phi[1][lvl],
                            motion.warp(pyr_phi[2][lvl], flows[1])])
        else:
            # flows start at zero on the top level, so no warping is needed
            values = np.stack([p[lvl] for p in pyr_y])
            phi = np.stack([p[lvl] for p in pyr_phi])
        source = BlockSource(values, luminance(values), np.clip(phi, 0.0, 1.0), longs[1], target)
        composite = pyr_B[lvl].copy()
        for row, col in np.argwhere(pyr_S[lvl]):
            est = estimate_pixel(source, int(row), int(col), R_state[row, col], rcfg, crf, dt_ref, cfg.gamma)
            composite[row, col] = est.radiance
            R_state[row, col] = est.R
            stats.regression_pixels += 1
            stats.bfgs_iterations += est.iterations
            stats.fallbacks += int(est.fallback)
            stats.degenerate += int(est.degenerate)
        if lvl < L - 1:
            ref_y = radiance_to_boosted(composite, crf, dt_ref, cfg.gamma)
            ref_lum = np.clip(luminance(ref_y), 0.0, 1.0)
            ref_w = _range_weight(ref_y, crf, cfg.gamma)
            for j, k in ((0, 0), (1, 2)):
                nb = np.clip(source.lum[k], 0.0, 1.0)
                flows[j] = flows[j] + motion.estimate_flow(ref_lum, nb, fparams, ref_weight=ref_w,
                                                           tgt_weight=source.phi[k])
                stats.flow_calls += 1
    if stats.fallbacks:
        log.info("frame %d: %d regression fallbacks", job.reference_index, stats.fallbacks)
    stats.seconds = time.perf_counter() - t0
    return FrameResult(IrradianceFrame(np.maximum(composite, 0.0)), support, background, stats)


def synthesize_video(frames: list[LdrFrame], crf: ResponseCurve, config: RunConfig = RunConfig(),
                     run_log: str | Path | None = None, debug_dir: str | Path | None = None,
                     progress=None) -> list[FrameResult]:
    """One HDR frame per input frame, boundary frames using a duplicated neighbor."""
    if len(frames) < 3:
        raise ValueError("video synthesis needs at least three frames")
    results = []
    sink = open(run_log, "w") if run_log else None
    try:
        for r in range(len(frames)):
            res = synthesize_frame(SynthesisJob(frames, crf, config, r), debug_dir)
            results.append(res)
            if sink:
                sink.write(res.stats.to_json() + "\n")
                sink.flush()
            if progress:
                progress(r, res)
    finally:
        if sink:
            sink.close()
    return results
