"""Denoising and contrast normalization applied before clump segmentation.

Every filter here replicates edge pixels at the image border.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage as ndi

from ._validation import L_MAX, check_gray_image, check_odd, check_positive, gray_dtype


def median_filter(image, k: int = 5, l_max: int = L_MAX) -> np.ndarray:
    """Median of each ``k x k`` neighborhood."""
    k = check_odd(k, "k")
    img = check_gray_image(image, l_max)
    return ndi.median_filter(img, size=k, mode="nearest")


def _tile_edges(n: int, tiles: int) -> np.ndarray:
    return (np.arange(tiles + 1) * n) // tiles


def _tile_maps(img: np.ndarray, tiles: int, clip: float, l_max: int) -> np.ndarray:
    nbins = l_max + 1
    ey = _tile_edges(img.shape[0], tiles)
    ex = _tile_edges(img.shape[1], tiles)
    maps = np.empty((tiles, tiles, nbins))
    for i in range(tiles):
        for j in range(tiles):
            tile = img[ey[i]:ey[i + 1], ex[j]:ex[j + 1]]
            n = tile.size
            hist = np.bincount(tile.ravel(), minlength=nbins).astype(np.float64)
            limit = clip * n
            excess = np.clip(hist - limit, 0.0, None).sum()
            hist = np.minimum(hist, limit) + excess / nbins
            maps[i, j] = l_max * np.cumsum(hist) / n
    return maps


def _interp_coords(n: int, tiles: int):
    edges = _tile_edges(n, tiles)
    centers = (edges[:-1] + edges[1:] - 1) / 2.0
    pos = np.interp(np.arange(n), centers, np.arange(tiles, dtype=np.float64))
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, tiles - 1)
    return lo, hi, pos - lo


def adaptive_hist_eq(image, tiles: int = 8, clip: float = 0.01, l_max: int = L_MAX) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    The image is split into a ``tiles x tiles`` grid. Each tile histogram is
    clipped at ``clip * tile_pixels`` counts per level, the clipped excess is
    spread evenly over all levels, and the cumulative histogram becomes that
    tile's gray-level mapping. Each pixel blends the mappings of the four
    nearest tile centers bilinearly.

    With ``tiles=1`` and ``clip=1`` this is global histogram equalization,
    ``round(l_max * cdf(v) / n)``.
    """
    img = check_gray_image(image, l_max)
    if int(tiles) != tiles or tiles < 1:
        raise ValueError(f"tiles must be a positive integer, got {tiles}")
    if not 0.0 < clip <= 1.0:
        raise ValueError(f"clip must lie in (0, 1], got {clip}")
    tiles = int(tiles)
    if tiles > min(img.shape):
        raise ValueError(f"tiles={tiles} exceeds the image size {img.shape}")

    maps = _tile_maps(img, tiles, clip, l_max)
    y0, y1, wy = _interp_coords(img.shape[0], tiles)
    x0, x1, wx = _interp_coords(img.shape[1], tiles)
    y0, y1, wy = y0[:, None], y1[:, None], wy[:, None]
    v = img.astype(np.intp)
    out = ((1 - wy) * (1 - wx) * maps[y0, x0, v]
           + (1 - wy) * wx * maps[y0, x1, v]
           + wy * (1 - wx) * maps[y1, x0, v]
           + wy * wx * maps[y1, x1, v])
    return np.clip(np.rint(out), 0, l_max).astype(gray_dtype(l_max))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps over radius ``ceil(3 * sigma)``."""
    sigma = check_positive(sigma, "sigma")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(image, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of a gray image or real-valued field."""
    kernel = gaussian_kernel(sigma)
    field = np.asarray(image, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {field.shape}")
    if not np.all(np.isfinite(field)):
        raise ValueError("image contains non-finite values")
    out = ndi.correlate1d(field, kernel, axis=0, mode="nearest")
    return ndi.correlate1d(out, kernel, axis=1, mode="nearest")
