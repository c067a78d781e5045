"""Raw checkpoint reading -> model-ready signal.

Pipeline order is fixed: concatenate the eight sensor segments, resample the
concatenation linearly to 1024 points (speed compensation), divide by the
mean (load compensation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError

N_SENSORS = 8
SIGNAL_LENGTH = 1024


@dataclass(frozen=True)
class Measurement:
    """One wheel pass over one checkpoint."""

    wheel_id: int
    checkpoint_id: int
    timestamp: int  # seconds since epoch
    speed: float  # km/h
    load: float
    segments: tuple

    def validate(self) -> None:
        if len(self.segments) != N_SENSORS:
            raise DataError(f"expected {N_SENSORS} segments, got {len(self.segments)}")
        for i, seg in enumerate(self.segments):
            if seg is None or len(seg) == 0:
                raise DataError(f"sensor {i}: missing or empty segment")
            if not np.all(np.isfinite(seg)):
                raise DataError(f"sensor {i}: non-finite values")
        if not self.load > 0:
            raise DataError(f"load must be positive, got {self.load}")


@dataclass(frozen=True)
class PreparedSignal:
    values: np.ndarray
    wheel_id: int
    timestamp: int


def concatenate_sensors(measurement) -> np.ndarray:
    segments = measurement.segments if hasattr(measurement, "segments") else measurement
    if len(segments) != N_SENSORS:
        raise DataError(f"expected {N_SENSORS} segments, got {len(segments)}")
    for i, seg in enumerate(segments):
        if seg is None or len(seg) == 0:
            raise DataError(f"sensor {i}: missing or empty segment")
    return np.concatenate([np.asarray(s, dtype=np.float64) for s in segments])


def resample_linear(signal, target_length: int = SIGNAL_LENGTH) -> np.ndarray:
    """Linear interpolation onto ``target_length`` evenly spaced positions.

    Output position ``i`` samples the input at ``i * (L - 1) / (T - 1)``, so
    both endpoints are reproduced exactly.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise DimensionError(f"resampling needs a 1-D signal of length >= 2, got shape {x.shape}")
    if target_length < 2:
        raise DimensionError("target length must be >= 2")
    if x.size == target_length:
        return x.copy()
    pos = np.linspace(0.0, x.size - 1, target_length)
    return np.interp(pos, np.arange(x.size, dtype=np.float64), x)


def normalize_load(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    mean = x.mean()
    if not mean > 0:
        raise DataError(f"signal mean {mean} is not positive (sensor fault?)")
    return x / mean


def prepare(measurement, target_length: int = SIGNAL_LENGTH) -> np.ndarray:
    """Full pipeline for one measurement; returns float32 of ``target_length``."""
    raw = concatenate_sensors(measurement)
    return normalize_load(resample_linear(raw, target_length)).astype(np.float32)


def prepare_signal(measurement, target_length: int = SIGNAL_LENGTH) -> PreparedSignal:
    return PreparedSignal(prepare(measurement, target_length), measurement.wheel_id, measurement.timestamp)


def prepare_many(measurements, target_length: int = SIGNAL_LENGTH) -> np.ndarray:
    out = np.empty((len(measurements), target_length), dtype=np.float32)
    for i, m in enumerate(measurements):
        out[i] = prepare(m, target_length)
    return out
