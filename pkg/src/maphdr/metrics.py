"""Objective HDR quality: PSNR in the log-luminance and perceptually uniform domains."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .imaging import luminance

PSNR_CAP = 100.0
LOG_FLOOR = 1e-5  # lower clamp relative to peak for logPSNR
PU_FLOOR = 1e-5  # cd/m^2
PU_CURVE_PATH = Path(__file__).parent / "data" / "pu_curve_v1.txt"


def _lum(img) -> np.ndarray:
    data = np.asarray(getattr(img, "data", img), dtype=float)
    return luminance(data) if data.ndim == 3 else data


def _psnr(peak: float, mse: float) -> float:
    if mse <= 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(peak * peak / mse), PSNR_CAP))


def log_psnr(test, ref, peak: float | None = None) -> float:
    """PSNR of ``log10`` luminance clamped to ``[1e-5 peak, peak]``; the range is five decades."""
    lt, lr = _lum(test), _lum(ref)
    if lt.shape != lr.shape:
        raise ValueError(f"shape mismatch: {lt.shape} vs {lr.shape}")
    if peak is None:
        peak = float(lr.max())
    if not peak > 0:
        raise ValueError("peak must be positive")
    lo = LOG_FLOOR * peak
    a = np.log10(np.clip(lt, lo, peak))
    b = np.log10(np.clip(lr, lo, peak))
    peak_log = np.log10(peak) - np.log10(lo)
    return _psnr(peak_log, float(np.mean((a - b) ** 2)))


@lru_cache(maxsize=None)
def pu_table(path: str = str(PU_CURVE_PATH)) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, comments="#")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    if np.any(np.diff(data[:, 0]) <= 0) or np.any(np.diff(data[:, 1]) <= 0):
        raise ValueError(f"{path}: curve must be strictly increasing")
    return data[:, 0], data[:, 1]


def pu_encode(lum: np.ndarray) -> np.ndarray:
    """Tabulated encoding, interpolated in log luminance and clamped to the table ends."""
    x, y = pu_table()
    lum = np.maximum(np.asarray(lum, dtype=float), PU_FLOOR)
    return np.interp(np.log(lum), np.log(x), y)


def pu_psnr(test, ref, luminance_scale: float = 1.0, peak_luminance: float | None = None) -> float:
    """PSNR after the perceptually uniform encoding of absolute luminance."""
    lt, lr = _lum(test) * luminance_scale, _lum(ref) * luminance_scale
    if lt.shape != lr.shape:
        raise ValueError(f"shape mismatch: {lt.shape} vs {lr.shape}")
    if peak_luminance is None:
        peak_luminance = float(lr.max())
    peak = float(pu_encode(peak_luminance))
    mse = float(np.mean((pu_encode(lt) - pu_encode(lr)) ** 2))
    return _psnr(peak, mse)


METRICS = {"logpsnr": log_psnr, "pupsnr": pu_psnr}


@dataclass
class MetricReport:
    metric: str
    values: list[float]
    params: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else float("nan")

    def to_dict(self) -> dict:
        return {"metric": self.metric, "values": self.values, "mean": self.mean, "params": self.params}


def evaluate(metric: str, tests, refs, **params) -> MetricReport:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    if len(tests) != len(refs):
        raise ValueError("test and reference sequences differ in length")
    fn = METRICS[metric]
    return MetricReport(metric, [fn(t, r, **params) for t, r in zip(tests, refs)], params)
