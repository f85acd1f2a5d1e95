"""Global photographic tone mapping for 8-bit previews of radiance maps."""
from __future__ import annotations

import numpy as np

from .imaging import luminance

LOG_AVG_FLOOR = 1e-6
DISPLAY_GAMMA = 2.2


def log_average(lum: np.ndarray, floor: float = LOG_AVG_FLOOR) -> float:
    return float(np.exp(np.mean(np.log(np.maximum(lum, floor)))))


def reinhard_curve(lum_scaled: np.ndarray, white: float = np.inf) -> np.ndarray:
    """``L_d = L_m (1 + L_m / white^2) / (1 + L_m)``; ``white = inf`` gives ``L_m / (1 + L_m)``."""
    lm = np.asarray(lum_scaled, dtype=float)
    burn = 0.0 if np.isinf(white) else lm / (white * white)
    return lm * (1.0 + burn) / (1.0 + lm)


def tonemap_reinhard(frame, key: float = 0.18, white: float | None = None,
                     gamma: float = DISPLAY_GAMMA) -> np.ndarray:
    """Map radiance to ``uint8`` display codes.

    ``white`` is the smallest scaled luminance mapped to pure white; ``None``
    uses the largest scaled luminance in the frame.
    """
    if not key > 0:
        raise ValueError("key must be positive")
    data = np.asarray(getattr(frame, "data", frame), dtype=float)
    if data.ndim == 2:
        data = data[..., None]
    lum = luminance(data)
    lm = key * lum / log_average(lum)
    if white is None:
        white = float(lm.max()) if lm.size and lm.max() > 0 else np.inf
    ld = reinhard_curve(lm, white)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lum > 0, ld / lum, 0.0)
    display = np.clip(data * ratio[..., None], 0.0, 1.0) ** (1.0 / gamma)
    out = np.rint(255.0 * display).astype(np.uint8)
    return out[..., 0] if out.shape[2] == 1 else out
