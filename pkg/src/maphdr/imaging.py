"""Frame types, camera response handling and exposedness weights.

Images are stored as ``(height, width, channels)`` numpy arrays with one or
three channels.  The camera response is tabulated in the Debevec convention:
``g[z]`` is the natural log of the exposure ``a * dt`` that produces code ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Rec. 709 luminance weights
LUMA = np.array([0.2126, 0.7152, 0.0722])

# number of table entries used for the end slopes of the extrapolated response
_EXTRAP_SPAN = 8


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 709 luminance over the last (channel) axis; single-channel passes through."""
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    return img @ LUMA


def _as_hwc(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[..., None]
    if data.ndim != 3 or data.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image, got shape {data.shape}")
    return data


@dataclass(frozen=True)
class LdrFrame:
    """Integer camera codes plus the exposure time used to capture them."""

    data: np.ndarray
    exposure_s: float
    long_exposure: bool | None = None

    def __post_init__(self):
        data = _as_hwc(self.data)
        if not np.issubdtype(data.dtype, np.integer):
            if not np.all(np.round(data) == data):
                raise ValueError("LDR codes must be integers")
            data = data.astype(np.int64)
        if data.size and data.min() < 0:
            raise ValueError("LDR codes must be nonnegative")
        if not self.exposure_s > 0:
            raise ValueError(f"exposure must be positive, got {self.exposure_s}")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class IrradianceFrame:
    """Linear radiance map, nonnegative and finite."""

    data: np.ndarray

    def __post_init__(self):
        data = _as_hwc(np.asarray(self.data, dtype=float))
        if not np.all(np.isfinite(data)):
            raise ValueError("irradiance values must be finite")
        if data.size and data.min() < 0:
            raise ValueError("irradiance values must be nonnegative")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ResponseCurve:
    """Tabulated log-exposure response ``g`` with linear extrapolation at the ends.

    ``table`` has shape ``(z_max + 1, channels)``.  Only the well-exposed range
    ``[z_th, z_max - z_th]`` has to be strictly increasing.  The table is used
    on the largest strictly increasing run of codes around that range; beyond
    the run (and for real-valued codes outside ``[0, z_max]``) the curve is
    continued linearly with the slope of the last ``_EXTRAP_SPAN`` entries.
    """

    table: np.ndarray
    z_th: int
    z_max: int
    _lo: np.ndarray = field(init=False, repr=False, compare=False)
    _hi: np.ndarray = field(init=False, repr=False, compare=False)
    _lo_slope: np.ndarray = field(init=False, repr=False, compare=False)
    _hi_slope: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        if table.ndim == 1:
            table = table[:, None]
        if table.shape[0] != self.z_max + 1:
            raise ValueError(f"table needs {self.z_max + 1} rows, got {table.shape[0]}")
        if not 0 < self.z_th < self.z_max / 2:
            raise ValueError(f"z_th must satisfy 0 < z_th < z_max/2, got {self.z_th}")
        core = table[self.z_th:self.z_max - self.z_th + 1]
        if not np.all(np.isfinite(core)):
            raise ValueError("response table must be finite on the well-exposed range")
        if np.any(np.diff(core, axis=0) <= 0):
            raise ValueError("response table is not strictly increasing on the well-exposed range")
        lo = np.full(table.shape[1], self.z_th)
        hi = np.full(table.shape[1], self.z_max - self.z_th)
        for c in range(table.shape[1]):
            col = table[:, c]
            while lo[c] > 0 and np.isfinite(col[lo[c] - 1]) and col[lo[c] - 1] < col[lo[c]]:
                lo[c] -= 1
            while hi[c] < self.z_max and np.isfinite(col[hi[c] + 1]) and col[hi[c] + 1] > col[hi[c]]:
                hi[c] += 1
        span = min(_EXTRAP_SPAN, int((hi - lo).min()) + 1) - 1
        lo_slope = np.array([(table[lo[c] + span, c] - table[lo[c], c]) / span for c in range(len(lo))])
        hi_slope = np.array([(table[hi[c], c] - table[hi[c] - span, c]) / span for c in range(len(hi))])
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)
        object.__setattr__(self, "_lo_slope", lo_slope)
        object.__setattr__(self, "_hi_slope", hi_slope)

    @property
    def channels(self) -> int:
        return self.table.shape[1]

    def monotone_range(self, channel: int = 0) -> tuple[int, int]:
        """Largest strictly increasing code run containing the well-exposed window."""
        return int(self._lo[channel]), int(self._hi[channel])

    def log_exposure(self, z: np.ndarray) -> np.ndarray:
        """Extrapolated ``g`` at real-valued codes; ``z`` is ``(..., channels)``."""
        z = np.asarray(z, dtype=float)
        out = np.empty(np.broadcast_shapes(z.shape, (self.channels,)))
        z = np.broadcast_to(z, out.shape)
        for c in range(self.channels):
            lo, hi = self._lo[c], self._hi[c]
            core = self.table[lo:hi + 1, c]
            zc = z[..., c]
            val = np.interp(zc, np.arange(lo, hi + 1, dtype=float), core)
            val = np.where(zc < lo, core[0] + self._lo_slope[c] * (zc - lo), val)
            val = np.where(zc > hi, core[-1] + self._hi_slope[c] * (zc - hi), val)
            out[..., c] = val
        return out

    def code_of(self, log_e: np.ndarray) -> np.ndarray:
        """Real-valued inverse of :meth:`log_exposure` (no clamping)."""
        log_e = np.asarray(log_e, dtype=float)
        out = np.empty(np.broadcast_shapes(log_e.shape, (self.channels,)))
        log_e = np.broadcast_to(log_e, out.shape)
        for c in range(self.channels):
            lo, hi = self._lo[c], self._hi[c]
            core = self.table[lo:hi + 1, c]
            e = log_e[..., c]
            with np.errstate(invalid="ignore"):
                val = np.interp(e, core, np.arange(lo, hi + 1, dtype=float))
                val = np.where(e < core[0], lo + (e - core[0]) / self._lo_slope[c], val)
                val = np.where(e > core[-1], hi + (e - core[-1]) / self._hi_slope[c], val)
            out[..., c] = val
        return out

    def for_channels(self, channels: int) -> "ResponseCurve":
        if channels == self.channels:
            return self
        if self.channels == 1:
            return ResponseCurve(np.repeat(self.table, channels, axis=1), self.z_th, self.z_max)
        raise ValueError(f"response has {self.channels} channels, frame has {channels}")


def default_z_th(z_max: int) -> int:
    return max(1, int(round(0.05 * z_max)))


def gamma_response(z_max: int = 255, gamma: float = 2.2, e_sat: float = 1.0,
                   z_th: int | None = None, channels: int = 1) -> ResponseCurve:
    """Power-law response ``z = z_max * (E / e_sat) ** (1/gamma)`` in table form."""
    z = np.arange(z_max + 1, dtype=float)
    # half-code offset keeps g finite at z = 0
    g = np.log(e_sat) + gamma * np.log((z + 0.5) / (z_max + 0.5))
    table = np.repeat(g[:, None], channels, axis=1)
    return ResponseCurve(table, default_z_th(z_max) if z_th is None else z_th, z_max)


def _check_codes(frame: LdrFrame, crf: ResponseCurve):
    if frame.data.max(initial=0) > crf.z_max:
        raise ValueError(f"frame has codes above z_max={crf.z_max}")


def inverse_response(frame: LdrFrame, crf: ResponseCurve) -> IrradianceFrame:
    """Radiance ``exp(g(z)) / dt`` with the extrapolated response at the range ends."""
    _check_codes(frame, crf)
    crf = crf.for_channels(frame.channels)
    return IrradianceFrame(np.exp(crf.log_exposure(frame.data)) / frame.exposure_s)


def _log_exposure_of(radiance: np.ndarray, exposure_s: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(radiance, dtype=float) * exposure_s)


def apply_response(frame: IrradianceFrame, crf: ResponseCurve, exposure_s: float) -> LdrFrame:
    """Noiseless forward model: radiance to rounded, clamped codes."""
    crf = crf.for_channels(frame.channels)
    z = crf.code_of(_log_exposure_of(frame.data, exposure_s))
    z = np.clip(np.nan_to_num(z, nan=0.0, neginf=0.0, posinf=crf.z_max), 0, crf.z_max)
    return LdrFrame(np.rint(z).astype(np.int64), exposure_s)


def radiance_to_boosted(radiance: np.ndarray, crf: ResponseCurve, exposure_s: float,
                        gamma: float) -> np.ndarray:
    """Map radiance to the normalized, gamma-adjusted code domain at ``exposure_s``.

    Codes beyond ``z_max`` are kept (extrapolated response); negative codes
    are clipped to zero.
    """
    radiance = np.asarray(radiance, dtype=float)
    crf = crf.for_channels(radiance.shape[-1]) if radiance.ndim == 3 else crf
    z = crf.code_of(_log_exposure_of(radiance, exposure_s))
    z = np.nan_to_num(z, nan=0.0, neginf=0.0)
    return (np.maximum(z, 0.0) / crf.z_max) ** (1.0 / gamma)


def boosted_to_radiance(y: np.ndarray, crf: ResponseCurve, exposure_s: float,
                        gamma: float) -> np.ndarray:
    """Inverse of :func:`radiance_to_boosted` for nonnegative ``y``."""
    y = np.asarray(y, dtype=float)
    crf = crf.for_channels(y.shape[-1]) if y.ndim == 3 else crf
    z = crf.z_max * np.maximum(y, 0.0) ** gamma
    return np.exp(crf.log_exposure(z)) / exposure_s


def exposure_boost(frame: LdrFrame, crf: ResponseCurve, target_exposure_s: float,
                   gamma: float) -> np.ndarray:
    """Re-expose a frame at ``target_exposure_s`` and gamma-adjust it.

    The result is real-valued and normalized so that ``z_max`` maps to 1;
    saturated pixels brightened by the boost may exceed 1.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    radiance = inverse_response(frame, crf).data
    return radiance_to_boosted(radiance, crf.for_channels(frame.channels), target_exposure_s, gamma)


def well_exposed_mask(frame: LdrFrame, crf: ResponseCurve) -> np.ndarray:
    """Boolean ``(H, W)`` mask, true where every channel is strictly inside the window."""
    z = frame.data
    ok = (z > crf.z_th) & (z < crf.z_max - crf.z_th)
    return np.all(ok, axis=2)


@dataclass(frozen=True)
class ExposednessWeights:
    phi: np.ndarray
    long_exposure: bool


def phi_of_codes(z: np.ndarray, z_th: int, z_max: int, long_exposure: bool) -> np.ndarray:
    """One-sided ramp weight for codes of a long or short exposure."""
    z = np.asarray(z, dtype=float)
    if long_exposure:
        return np.clip((z_max - z_th - z) / z_th, 0.0, 1.0)
    return np.clip((z - z_th) / z_th, 0.0, 1.0)


def phi_weight(frame: LdrFrame, crf: ResponseCurve, long_exposure: bool | None = None) -> ExposednessWeights:
    """Per-pixel exposedness; the worst channel decides for color frames."""
    if long_exposure is None:
        long_exposure = frame.long_exposure
    if long_exposure is None:
        raise ValueError("frame must be tagged as long or short exposure")
    phi = phi_of_codes(frame.data, crf.z_th, crf.z_max, long_exposure).min(axis=2)
    return ExposednessWeights(phi, bool(long_exposure))


def tag_exposures(exposures) -> list[bool]:
    """Label each exposure long (True) or short relative to the sequence extremes."""
    exposures = np.asarray(exposures, dtype=float)
    lo, hi = exposures.min(), exposures.max()
    if hi <= lo:
        return [True] * len(exposures)
    mid = np.sqrt(lo * hi)
    return [bool(e >= mid) for e in exposures]


def log_noise_std(frame: LdrFrame, crf: ResponseCurve, channel: int | None = None) -> np.ndarray:
    """Standard deviation of log radiance caused by one code of noise, per pixel.

    For one channel this is the local slope ``g'(z)``.  With ``channel=None`` it
    is the first-order deviation of log luminance, combining the channels with
    their share of the luminance.
    """
    _check_codes(frame, crf)
    crf = crf.for_channels(frame.channels)
    z = frame.data.astype(float)
    slope = crf.log_exposure(z + 0.5) - crf.log_exposure(z - 0.5)
    if channel is not None:
        return slope[..., channel]
    if frame.channels == 1:
        return slope[..., 0]
    part = np.exp(crf.log_exposure(z)) * LUMA
    share = part / part.sum(axis=2, keepdims=True)
    return np.sqrt(np.sum((share * slope) ** 2, axis=2))
