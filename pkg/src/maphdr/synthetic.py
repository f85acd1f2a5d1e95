"""Synthetic alternating-exposure sequences with known radiance and motion masks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import LdrFrame, ResponseCurve, gamma_response

DEFAULT_EXPOSURES = (0.005, 0.0005)


@dataclass(frozen=True)
class MovingRect:
    x: float
    y: float
    width: int
    height: int
    vx: float
    vy: float
    radiance: tuple[float, ...] = (120.0, 110.0, 100.0)
    texture: float = 0.25
    period: float = 6.0

    def origin(self, k: int) -> tuple[int, int]:
        return int(round(self.x + self.vx * k)), int(round(self.y + self.vy * k))


@dataclass(frozen=True)
class SceneSpec:
    width: int = 160
    height: int = 120
    frames: int = 9
    channels: int = 3
    bg_min: float = 2.0
    bg_max: float = 1500.0
    bg_texture: float = 0.2
    bg_tint: tuple[float, ...] = (1.0, 0.95, 0.9)
    rects: tuple[MovingRect, ...] = (MovingRect(46.0, 10.0, 14, 14, 0.0, 7.0),)
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1 or self.width < 1 or self.height < 1:
            raise ValueError("scene needs positive size and frame count")
        if not 0 < self.bg_min <= self.bg_max:
            raise ValueError("background radiance range must be positive and ordered")
        if len(self.bg_tint) != self.channels:
            raise ValueError("bg_tint needs one entry per channel")


@dataclass
class SyntheticSequence:
    frames: list[LdrFrame]
    radiance: list[np.ndarray]
    masks: list[np.ndarray]
    crf: ResponseCurve
    spec: SceneSpec = field(repr=False)


def background(spec: SceneSpec) -> np.ndarray:
    """Horizontal log-radiance gradient with a vertical sinusoidal texture."""
    ys, xs = np.mgrid[0:spec.height, 0:spec.width].astype(float)
    t = xs / max(spec.width - 1, 1)
    log_l = np.log(spec.bg_min) + t * (np.log(spec.bg_max) - np.log(spec.bg_min))
    lum = np.exp(log_l) * (1.0 + spec.bg_texture * np.sin(2 * np.pi * ys / 17.0))
    return lum[..., None] * np.asarray(spec.bg_tint, dtype=float)


def render(spec: SceneSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth radiance and moving-object mask at frame ``k``."""
    img = background(spec)
    mask = np.zeros((spec.height, spec.width), dtype=bool)
    for rect in spec.rects:
        x0, y0 = rect.origin(k)
        r0, r1 = max(y0, 0), min(y0 + rect.height, spec.height)
        c0, c1 = max(x0, 0), min(x0 + rect.width, spec.width)
        if r0 >= r1 or c0 >= c1:
            continue
        # texture is attached to the object so it moves with it
        ly, lx = np.mgrid[r0 - y0:r1 - y0, c0 - x0:c1 - x0].astype(float)
        pattern = 1.0 + rect.texture * np.sin(2 * np.pi * lx / rect.period) * np.cos(2 * np.pi * ly / rect.period)
        rad = np.asarray(rect.radiance, dtype=float)[:spec.channels]
        img[r0:r1, c0:c1] = pattern[..., None] * rad
        mask[r0:r1, c0:c1] = True
    return img, mask


def generate_synthetic(spec: SceneSpec = SceneSpec(), crf: ResponseCurve | None = None,
                       exposures: tuple[float, ...] = DEFAULT_EXPOSURES) -> SyntheticSequence:
    """Render the scene, cycle through ``exposures`` and quantize with noise in code space."""
    if crf is None:
        crf = gamma_response(channels=spec.channels)
    crf = crf.for_channels(spec.channels)
    rng = np.random.default_rng(spec.seed)
    frames, truth, masks = [], [], []
    longest = max(exposures)
    for k in range(spec.frames):
        dt = exposures[k % len(exposures)]
        rad, mask = render(spec, k)
        with np.errstate(divide="ignore"):
            z = crf.code_of(np.log(rad * dt))
        if spec.noise_sigma > 0:
            z = z + rng.normal(0.0, spec.noise_sigma, size=z.shape)
        z = np.clip(np.rint(np.nan_to_num(z, nan=0.0)), 0, crf.z_max).astype(np.int64)
        frames.append(LdrFrame(z, dt, long_exposure=bool(dt >= longest)))
        truth.append(rad)
        masks.append(mask)
    return SyntheticSequence(frames, truth, masks, crf, spec)
