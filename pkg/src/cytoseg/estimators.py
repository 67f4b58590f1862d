"""scikit-learn style wrappers over the functional pipeline.

Samples are whole images: ``X`` is a single 2-D image, a 3-D array of
equally sized images, or a list of 2-D images.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import thresholding
from ._validation import L_MAX, check_gray_image, check_mask
from .imagecore import compute_histogram
from .metrics import evaluate
from .pipeline import PipelineConfig, run_pipeline


def check_images(X, l_max: int = L_MAX) -> list:
    """Return ``X`` as a list of validated 2-D gray images."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    elif isinstance(X, np.ndarray) and X.ndim == 3:
        X = list(X)
    elif not isinstance(X, (list, tuple)):
        raise ValueError("X must be a 2-D image, a 3-D array of images or a list of images")
    if len(X) == 0:
        raise ValueError("X holds no images")
    return [check_gray_image(img, l_max, f"X[{i}]") for i, img in enumerate(X)]


def _stack(masks, shape) -> np.ndarray:
    if not masks:
        return np.zeros((0, *shape), dtype=bool)
    return np.stack([check_mask(m, shape) for m in masks])


class CytoplasmSegmenter(BaseEstimator):
    """Segment overlapping cells, one mask per detected nucleus.

    Parameters mirror the configuration file keys; the ``drlse_*`` entries
    control the contour evolution.

    Attributes
    ----------
    config_ : PipelineConfig built from the parameters by :meth:`fit`.
    results_ : list of SegmentationResult from the latest :meth:`predict`.
    """

    def __init__(self, median_kernel=5, ahe_tiles=8, ahe_clip=0.01, hmax_h=30,
                 min_clump_area=2000, nucleus_prior=0.05, min_nucleus_area=100,
                 init_disc_margin=5, edf_window=9, drlse_mu=0.04, drlse_lambda=5.0,
                 drlse_balloon=-1.5, drlse_epsilon=1.5, drlse_dt=5.0, drlse_c0=2.0,
                 drlse_sigma=1.5, drlse_max_iters=600, drlse_check_every=10,
                 drlse_converge_frac=0.001):
        self.median_kernel = median_kernel
        self.ahe_tiles = ahe_tiles
        self.ahe_clip = ahe_clip
        self.hmax_h = hmax_h
        self.min_clump_area = min_clump_area
        self.nucleus_prior = nucleus_prior
        self.min_nucleus_area = min_nucleus_area
        self.init_disc_margin = init_disc_margin
        self.edf_window = edf_window
        self.drlse_mu = drlse_mu
        self.drlse_lambda = drlse_lambda
        self.drlse_balloon = drlse_balloon
        self.drlse_epsilon = drlse_epsilon
        self.drlse_dt = drlse_dt
        self.drlse_c0 = drlse_c0
        self.drlse_sigma = drlse_sigma
        self.drlse_max_iters = drlse_max_iters
        self.drlse_check_every = drlse_check_every
        self.drlse_converge_frac = drlse_converge_frac

    @classmethod
    def from_config(cls, cfg: PipelineConfig) -> "CytoplasmSegmenter":
        return cls(**cfg.as_flat_dict())

    def fit(self, X=None, y=None):
        """Validate the parameters; nothing is learned from data."""
        self.config_ = PipelineConfig.from_flat_dict(self.get_params())
        return self

    def segment(self, image_or_stack):
        """Full :class:`SegmentationResult` for one image or focal stack."""
        check_is_fitted(self, "config_")
        return run_pipeline(image_or_stack, self.config_)

    def predict(self, X) -> list:
        """Per image, a boolean array of shape ``(n_cells, H, W)``."""
        check_is_fitted(self, "config_")
        images = check_images(X)
        self.results_ = [run_pipeline(img, self.config_) for img in images]
        return [_stack(r.cells, img.shape) for r, img in zip(self.results_, images)]

    def score(self, X, y) -> float:
        """Mean per-cell Dice, averaged over images.

        ``y`` holds, per image, the ground-truth cell masks.
        """
        preds = self.predict(X)
        if len(y) != len(preds):
            raise ValueError(f"got {len(preds)} images but {len(y)} ground truths")
        return float(np.mean([evaluate(list(p), list(g)).dc_mean for p, g in zip(preds, y)]))


class ModifiedOtsuThreshold(TransformerMixin, BaseEstimator):
    """Global threshold from the pooled histogram, optionally prior-weighted.

    Parameters
    ----------
    alpha : float or None
        Prior weight of the dark class. ``None`` gives plain Otsu.
    l_max : int
        Largest intensity level.

    Attributes
    ----------
    threshold_ : int, pixels ``<= threshold_`` form the dark class.
    objective_ : float, weighted within-class variance at the threshold.
    """

    def __init__(self, alpha=0.05, l_max=L_MAX):
        self.alpha = alpha
        self.l_max = l_max

    def fit(self, X, y=None):
        images = check_images(X, self.l_max)
        counts = sum(compute_histogram(img, l_max=self.l_max).counts for img in images)
        p = counts / counts.sum()
        if self.alpha is None:
            res = thresholding.otsu(p)
        else:
            res = thresholding.modified_otsu(p, self.alpha)
        self.threshold_, self.objective_ = int(res.t), float(res.objective)
        return self

    def transform(self, X) -> np.ndarray:
        """Dark-class masks, shape ``(n_images, H, W)`` (images must share a size)."""
        check_is_fitted(self, "threshold_")
        images = check_images(X, self.l_max)
        return np.stack([thresholding.apply_threshold(img, self.threshold_, None, self.l_max)
                         for img in images])
