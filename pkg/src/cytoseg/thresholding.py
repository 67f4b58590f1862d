"""Otsu thresholding and its prior-probability-weighted variant.

Intensities are indexed ``0..l_max``. A threshold ``t`` splits the levels
into a dark class ``{i <= t}`` and a bright class ``{i > t}``; the dark class
is the object class (nuclei are dark).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._validation import L_MAX, check_gray_image, check_mask

# Relative slack under which two objective values count as tied.
TIE_RTOL = 1e-12


class DegenerateHistogramError(ValueError):
    """The distribution has fewer than two populated intensity levels."""


class ThresholdResult(NamedTuple):
    t: int
    objective: float


def _check_prob(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("probability vector must be 1-D with at least two levels")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
    return p


def within_class_variance(p, t: int) -> float:
    """``w1 * var1 + w2 * var2`` for the split at ``t``.

    Each class variance is taken under ``p`` restricted to the class and
    renormalized by its mass.
    """
    p = _check_prob(p)
    if not 0 <= t < p.size - 1:
        raise ValueError(f"t must lie in [0, {p.size - 2}], got {t}")
    levels = np.arange(p.size, dtype=np.float64)
    total = 0.0
    for sl in (slice(0, t + 1), slice(t + 1, None)):
        w = p[sl].sum()
        if w <= 0:
            raise DegenerateHistogramError(f"empty class at t={t}")
        mu = np.dot(levels[sl], p[sl]) / w
        total += np.dot((levels[sl] - mu) ** 2, p[sl])
    return float(total)


def _objective_curve(p: np.ndarray) -> np.ndarray:
    """Within-class variance for every split ``t = 0..L-2`` via prefix sums."""
    levels = np.arange(p.size, dtype=np.float64)
    x = levels - np.dot(levels, p)  # centering limits cancellation
    w1 = np.cumsum(p)[:-1]
    m1 = np.cumsum(x * p)[:-1]
    s1 = np.cumsum(x * x * p)[:-1]
    w2 = p[::-1].cumsum()[::-1][1:]
    m2 = (x * p)[::-1].cumsum()[::-1][1:]
    s2 = (x * x * p)[::-1].cumsum()[::-1][1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        v1 = np.where(w1 > 0, s1 - m1 * m1 / w1, 0.0)
        v2 = np.where(w2 > 0, s2 - m2 * m2 / w2, 0.0)
    return np.maximum(v1 + v2, 0.0)


def _valid_range(p: np.ndarray) -> tuple[int, int]:
    support = np.flatnonzero(p > 0)
    if support.size < 2:
        raise DegenerateHistogramError("distribution needs at least two populated levels")
    return int(support[0]), int(support[-1])


def otsu(p) -> ThresholdResult:
    """Threshold minimizing the within-class variance; ties go to the smallest ``t``."""
    p = _check_prob(p)
    lo, hi = _valid_range(p)
    curve = _objective_curve(p)[lo:hi]
    best = curve.min()
    tol = TIE_RTOL * max(1.0, float(np.dot(p, (np.arange(p.size) - np.dot(np.arange(p.size), p)) ** 2)))
    idx = int(np.flatnonzero(curve <= best + tol)[0])
    return ThresholdResult(lo + idx, float(curve[idx]))


def reweight_distribution(p, alpha: float) -> np.ndarray:
    """Reweight ``p`` by the prior mass ``alpha`` of the dark class.

    The cut ``l`` is the largest level whose cumulative mass stays below
    ``alpha``. Levels ``i <= l`` are scaled by ``1 - alpha``, the rest by
    ``alpha``, and the result is renormalized. When even level 0 carries
    ``alpha`` or more, no prefix exists and ``p`` comes back unchanged.
    """
    p = _check_prob(p)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    below = np.flatnonzero(np.cumsum(p) < alpha)
    weights = np.full(p.size, alpha)
    if below.size:
        weights[: below[-1] + 1] = 1.0 - alpha
    q = p * weights
    return q / q.sum()


def prior_cut(p, alpha: float) -> int | None:
    """The cut level ``l`` used by :func:`reweight_distribution`, or None."""
    below = np.flatnonzero(np.cumsum(_check_prob(p)) < alpha)
    return int(below[-1]) if below.size else None


def modified_otsu(p, alpha: float = 0.05) -> ThresholdResult:
    """Otsu threshold of the prior-reweighted distribution.

    ``objective`` is reported on the reweighted distribution.
    """
    return otsu(reweight_distribution(p, alpha))


def apply_threshold(image, t: int, roi=None, l_max: int = L_MAX) -> np.ndarray:
    """Dark-class mask: pixels with intensity ``<= t`` (inside ``roi`` if given)."""
    img = check_gray_image(image, l_max)
    mask = img <= t
    if roi is not None:
        mask &= check_mask(roi, img.shape, "roi")
    return mask
