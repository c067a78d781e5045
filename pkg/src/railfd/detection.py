"""Wheel-level defect decisions from per-measurement scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, OrderingError

DEFAULT_WINDOW = 5
DEFAULT_THRESHOLDS = {"contrastive-ocsvm": 0.88, "helm": 0.88, "dyncoeff": 1.8}


@dataclass(frozen=True)
class DetectionResult:
    wheel_id: int
    flagged: bool
    detection_timestamp: int | None
    detector: str

    def __post_init__(self):
        if self.flagged != (self.detection_timestamp is not None):
            raise ValueError("detection_timestamp must be present iff flagged")


@dataclass(frozen=True)
class HealthSeries:
    wheel_id: int
    timestamps: np.ndarray
    values: np.ndarray
    detector: str = ""


def dyn_coeff(signal) -> float:
    """Peak-to-static load ratio ``max(x) / mean(x)``."""
    x = np.asarray(signal, dtype=np.float64)
    mean = x.mean()
    if not mean > 0:
        raise DataError(f"signal mean {mean} is not positive")
    return float(x.max() / mean)


def dyn_coeff_many(signals) -> np.ndarray:
    x = np.asarray(signals, dtype=np.float64)
    mean = x.mean(axis=1)
    if not np.all(mean > 0):
        raise DataError("signal with non-positive mean")
    return x.max(axis=1) / mean


def detect(series: HealthSeries, threshold: float, window: int = DEFAULT_WINDOW, detector: str | None = None) -> DetectionResult:
    """Flag the wheel at the first window of ``window`` consecutive values whose median exceeds ``threshold``."""
    ts = np.asarray(series.timestamps)
    vals = np.asarray(series.values, dtype=np.float64)
    name = detector if detector is not None else series.detector
    if ts.shape != vals.shape:
        raise ValueError("timestamps and values differ in length")
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise OrderingError(f"health series for wheel {series.wheel_id} is not time-sorted")
    end = kernels.first_median_exceed(vals, window, threshold) if vals.size >= window else -1
    if end < 0:
        return DetectionResult(series.wheel_id, False, None, name)
    return DetectionResult(series.wheel_id, True, int(ts[end]), name)


def ensemble_or(results, name: str = "ensemble") -> DetectionResult:
    """Flag if any member flags; detection time is the earliest member time."""
    results = list(results)
    if not results:
        raise ValueError("ensemble needs at least one member")
    wheel = results[0].wheel_id
    if any(r.wheel_id != wheel for r in results):
        raise DataError(f"wheel-id mismatch in ensemble: {[r.wheel_id for r in results]}")
    times = [r.detection_timestamp for r in results if r.flagged]
    if not times:
        return DetectionResult(wheel, False, None, name)
    return DetectionResult(wheel, True, min(times), name)
