"""Input validation helpers shared by every module.

Images travel through the package as plain 2-D numpy arrays: gray images as
unsigned integer arrays with values in ``[0, l_max]``, binary masks as
``bool`` arrays and label maps as ``int32`` arrays with 0 for background.
"""

from __future__ import annotations

import numpy as np

L_MAX = 255


def gray_dtype(l_max: int) -> np.dtype:
    return np.dtype(np.uint8) if l_max <= 255 else np.dtype(np.uint16)


def check_gray_image(image, l_max: int = L_MAX, name: str = "image") -> np.ndarray:
    """Validate a gray image and return it as an unsigned integer array.

    Integer-valued float arrays are accepted; anything non-integral,
    negative, above ``l_max`` or not 2-D raises ``ValueError``.
    """
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if arr.dtype == bool:
        raise ValueError(f"{name} must hold intensities, not booleans")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError(f"{name} must hold integer intensities")
    if arr.min() < 0 or arr.max() > l_max:
        raise ValueError(f"{name} values must lie in [0, {l_max}]")
    return arr.astype(gray_dtype(l_max), copy=False)


def check_mask(mask, shape: tuple[int, int] | None = None, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match {tuple(shape)}")
    return arr.astype(bool, copy=False)


def check_labels(labels, name: str = "labels") -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer) or (arr.size and arr.min() < 0):
        raise ValueError(f"{name} must hold non-negative integers")
    return arr.astype(np.int32, copy=False)


def check_odd(value: int, name: str) -> int:
    if int(value) != value or value < 1 or value % 2 == 0:
        raise ValueError(f"{name} must be an odd positive integer, got {value}")
    return int(value)


def check_positive(value: float, name: str) -> float:
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return float(value)
