"""Raster I/O and histogram extraction.

Readers accept 8-bit PNG and binary PGM (``P5``). Masks are written as 8-bit
images (0 / 255) and label maps as 16-bit grayscale PNG holding raw labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from ._validation import L_MAX, check_gray_image, check_labels, check_mask

_READABLE_FORMATS = {"PNG", "PPM"}
_EIGHT_BIT_MODES = {"1", "L", "P", "RGB", "RGBA", "LA"}


class ImageReadError(OSError):
    """The file could not be opened or decoded."""


class UnsupportedImageError(ValueError):
    """The file decodes, but its format or bit depth is not supported."""


@dataclass(frozen=True)
class Histogram:
    """Per-level pixel counts for levels ``0..l_max``."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def l_max(self) -> int:
        return len(self.counts) - 1


def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnidentifiedImageError, OSError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc
    if img.format not in _READABLE_FORMATS:
        raise UnsupportedImageError(f"{path}: unsupported format {img.format}")
    return img


def load_grayscale(path) -> np.ndarray:
    """Read an 8-bit PNG or PGM as a ``uint8`` gray image.

    Color inputs are reduced to luma with Rec.601 weights, rounded to the
    nearest integer.
    """
    img = _open(path)
    if img.mode not in _EIGHT_BIT_MODES:
        raise UnsupportedImageError(f"{path}: unsupported mode {img.mode} (8-bit images only)")
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8).copy()
    if img.mode == "1":
        return np.asarray(img.convert("L"), dtype=np.uint8).copy()
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.rint(luma), 0, L_MAX).astype(np.uint8)


def load_mask(path) -> np.ndarray:
    """Read an 8-bit mask file; any nonzero pixel is foreground."""
    return load_grayscale(path) > 0


def load_labels(path) -> np.ndarray:
    """Read a label map written by :func:`save_mask` (16- or 8-bit)."""
    img = _open(path)
    if img.mode in ("I;16", "I;16B", "I", "L"):
        return check_labels(np.asarray(img).astype(np.int32))
    raise UnsupportedImageError(f"{path}: unsupported label map mode {img.mode}")


def save_image(image, path, l_max: int = L_MAX) -> None:
    arr = check_gray_image(image, l_max)
    if arr.dtype != np.uint8:
        raise UnsupportedImageError("only 8-bit gray images can be written")
    Image.fromarray(arr).save(path, format="PNG")


def save_mask(mask, path) -> None:
    """Write a boolean mask (8-bit, 0/255) or a label map (16-bit PNG)."""
    arr = np.asarray(mask)
    if arr.dtype == bool:
        out = np.where(check_mask(arr), 255, 0).astype(np.uint8)
        Image.fromarray(out).save(path, format="PNG")
        return
    labels = check_labels(arr)
    if labels.size and labels.max() > np.iinfo(np.uint16).max:
        raise ValueError("label map has more labels than a 16-bit PNG can hold")
    Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")


def compute_histogram(image, roi=None, l_max: int = L_MAX) -> Histogram:
    """Count intensities of ``image``, optionally restricted to ``roi``."""
    img = check_gray_image(image, l_max)
    if roi is None:
        values = img.ravel()
    else:
        roi = check_mask(roi, img.shape, "roi")
        if not roi.any():
            raise ValueError("roi has no foreground pixels")
        values = img[roi]
    return Histogram(np.bincount(values, minlength=l_max + 1).astype(np.int64))


def normalize(hist: Histogram) -> np.ndarray:
    """Turn counts into a probability vector ``p(i) = h(i) / total``."""
    total = hist.total
    if total <= 0:
        raise ValueError("histogram is empty")
    return hist.counts / float(total)
