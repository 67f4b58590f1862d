"""Grayscale reconstruction and binary component tools for clump extraction.

Foreground connectivity is 8 throughout; background connectivity (used when
filling holes) is 4.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage as ndi
from skimage.morphology import reconstruction

from ._validation import L_MAX, check_gray_image, check_labels, check_mask

_STRUCT = {4: ndi.generate_binary_structure(2, 1), 8: ndi.generate_binary_structure(2, 2)}


def reconstruct_dilation(marker, mask, l_max: int = L_MAX) -> np.ndarray:
    """Morphological reconstruction of ``marker`` by dilation under ``mask``.

    Geodesic dilation (3x3 neighborhood) is iterated to its fixpoint, so the
    result ``R`` always satisfies ``marker <= R <= mask``.
    """
    marker = check_gray_image(marker, l_max, "marker")
    mask = check_gray_image(mask, l_max, "mask")
    if marker.shape != mask.shape:
        raise ValueError(f"marker shape {marker.shape} does not match mask shape {mask.shape}")
    if np.any(marker > mask):
        raise ValueError("marker exceeds mask")
    out = reconstruction(marker.astype(np.float64), mask.astype(np.float64),
                         method="dilation", footprint=_STRUCT[8])
    return np.rint(out).astype(mask.dtype)


def h_maxima_suppress(image, h: int, l_max: int = L_MAX) -> np.ndarray:
    """H-maxima transform: level every regional maximum of height <= ``h``."""
    if h < 1:
        raise ValueError(f"h must be >= 1, got {h}")
    img = check_gray_image(image, l_max)
    marker = np.clip(img.astype(np.int64) - int(h), 0, None).astype(img.dtype)
    return reconstruct_dilation(marker, img, l_max)


def regional_minima(image, l_max: int = L_MAX) -> np.ndarray:
    """Flat zones (8-connected) whose outside neighbors are all strictly brighter.

    A constant image is a single flat zone without outside neighbors and is
    therefore entirely a regional minimum.
    """
    img = check_gray_image(image, l_max).astype(np.float64)
    # Reconstruction by erosion of img + 1 only stays above img on minima.
    rec = reconstruction(img + 1.0, img, method="erosion", footprint=_STRUCT[8])
    return rec > img


def regional_maxima(image, l_max: int = L_MAX) -> np.ndarray:
    img = check_gray_image(image, l_max)
    return regional_minima(l_max - img.astype(np.int64), l_max)


def connected_components(mask, connectivity: int = 8) -> np.ndarray:
    """Label foreground components 1..n in order of first raster encounter."""
    if connectivity not in _STRUCT:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = check_mask(mask)
    labels, _ = ndi.label(mask, structure=_STRUCT[connectivity])
    return _relabel_raster(labels.astype(np.int32))


def n_labels(labels) -> int:
    return int(np.asarray(labels).max(initial=0))


def _relabel_raster(labels: np.ndarray, keep=None) -> np.ndarray:
    flat = labels.ravel()
    values, first = np.unique(flat, return_index=True)
    order = [v for _, v in sorted(zip(first, values)) if v != 0 and (keep is None or keep[v])]
    lut = np.zeros(int(values.max(initial=0)) + 1, dtype=np.int32)
    lut[np.asarray(order, dtype=np.intp)] = np.arange(1, len(order) + 1, dtype=np.int32)
    return lut[labels]


def component_areas(labels) -> np.ndarray:
    """Pixel count per label; index 0 holds the background count."""
    labels = check_labels(labels)
    return np.bincount(labels.ravel())


def remove_small_components(labels, min_area: int) -> np.ndarray:
    """Drop components with area strictly below ``min_area`` and relabel."""
    if min_area < 0:
        raise ValueError(f"min_area must be >= 0, got {min_area}")
    labels = check_labels(labels)
    keep = component_areas(labels) >= min_area
    return _relabel_raster(labels, keep)


def fill_holes(mask) -> np.ndarray:
    """Fill background regions that are not 4-connected to the image border."""
    return ndi.binary_fill_holes(check_mask(mask), structure=_STRUCT[4])
