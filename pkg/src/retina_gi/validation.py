"""Input validation helpers shared by the estimators and functional API."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .core import MeasurementRecord, PatternStack, Roi


def check_image(image, name="image") -> np.ndarray:
    """Return ``image`` as a 2-D float64 array, checking the ``[0, 1]`` range."""
    a = check_array(image, dtype=np.float64, ensure_2d=True, ensure_min_samples=1, ensure_min_features=1)
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]; got range [{a.min()}, {a.max()}]")
    return a


def check_stack(stack) -> PatternStack:
    """Accept a ``PatternStack`` or any ``(T, H, W)`` 0/1 array-like."""
    if isinstance(stack, PatternStack):
        return stack
    return PatternStack(np.asarray(stack))


def check_measurements(rec) -> MeasurementRecord:
    if isinstance(rec, MeasurementRecord):
        return rec
    return MeasurementRecord(np.asarray(rec, dtype=np.float64).ravel())


def check_roi(roi, frame_shape) -> Roi:
    if roi is None:
        return Roi.full(frame_shape)
    if not isinstance(roi, Roi):
        roi = Roi(*roi)
    if not roi.fits(frame_shape):
        raise ValueError(f"{roi} does not fit inside a {frame_shape[0]}x{frame_shape[1]} frame")
    return roi


def check_same_shape(a: np.ndarray, b: np.ndarray, what="images") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def check_stack_record(stack: PatternStack, rec: MeasurementRecord, min_count=1) -> None:
    if stack.count != rec.count:
        raise ValueError(f"{stack.count} patterns but {rec.count} measurements")
    if rec.count < min_count:
        raise ValueError(f"need at least {min_count} measurements, got {rec.count}")
