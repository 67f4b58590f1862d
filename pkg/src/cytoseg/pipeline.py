"""End-to-end segmentation: EDF fusion, clumps, nuclei, then one contour per nucleus."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import ndimage as ndi

from . import levelset, morphology, preprocess, thresholding
from ._validation import L_MAX, check_gray_image, check_mask, check_odd
from .imagecore import compute_histogram, normalize
from .levelset import DrlseParams

logger = logging.getLogger(__name__)

REFERENCE_AREA = 1024 * 1024
DEGENERATE_FRACTION = 0.9


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass(frozen=True)
class PipelineConfig:
    median_kernel: int = 5
    ahe_tiles: int = 8
    ahe_clip: float = 0.01
    hmax_h: int = 30
    min_clump_area: int = 2000
    nucleus_prior: float = 0.05
    min_nucleus_area: int = 100
    init_disc_margin: int = 5
    drlse: DrlseParams = field(default_factory=DrlseParams)
    edf_window: int = 9

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        check_odd(self.median_kernel, "median_kernel")
        check_odd(self.edf_window, "edf_window")
        if self.ahe_tiles < 1 or not 0 < self.ahe_clip <= 1:
            raise ValueError("ahe_tiles must be >= 1 and ahe_clip in (0, 1]")
        if self.hmax_h < 1:
            raise ValueError(f"hmax_h must be >= 1, got {self.hmax_h}")
        if self.min_clump_area < 0 or self.min_nucleus_area < 0:
            raise ValueError("minimum areas must be >= 0")
        if not 0 < self.nucleus_prior < 1:
            raise ValueError(f"nucleus_prior must lie in (0, 1), got {self.nucleus_prior}")
        if self.init_disc_margin < 0:
            raise ValueError("init_disc_margin must be >= 0")
        self.drlse.check()

    def scaled_area(self, area: int, shape) -> int:
        """Scale a pixel area given for 1024x1024 inputs to ``shape``."""
        return int(round(area * shape[0] * shape[1] / REFERENCE_AREA))

    def as_flat_dict(self) -> dict:
        flat = {k: v for k, v in asdict(self).items() if k != "drlse"}
        for f in fields(DrlseParams):
            flat[f"drlse_{'lambda' if f.name == 'lam' else f.name}"] = getattr(self.drlse, f.name)
        return flat

    @classmethod
    def from_flat_dict(cls, values: dict) -> "PipelineConfig":
        top, drlse = {}, {}
        for key, value in values.items():
            if key.startswith("drlse_"):
                name = key[len("drlse_"):]
                drlse["lam" if name == "lambda" else name] = value
            else:
                top[key] = value
        return cls(drlse=DrlseParams(**drlse), **top)


@dataclass
class SegmentationResult:
    clumps: np.ndarray
    nuclei: np.ndarray
    nucleus_centroids: list
    cells: list
    cell_clumps: list = field(default_factory=list)
    preprocessed: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)


def edf_fuse(stack, window: int = 9, l_max: int = L_MAX) -> np.ndarray:
    """Per pixel, take the plane with the largest local variance.

    Variance is measured over a ``window x window`` neighborhood; ties go to
    the lowest plane index.
    """
    window = check_odd(window, "window")
    planes = [check_gray_image(p, l_max, "stack plane") for p in stack]
    if not planes:
        raise ValueError("stack is empty")
    if any(p.shape != planes[0].shape for p in planes):
        raise ValueError("stack planes differ in size")
    if len(planes) == 1:
        return planes[0].copy()
    focus = []
    for p in planes:
        f = p.astype(np.float64)
        mean = ndi.uniform_filter(f, window, mode="nearest")
        focus.append(ndi.uniform_filter(f * f, window, mode="nearest") - mean * mean)
    best = np.argmax(np.stack(focus), axis=0)
    return np.take_along_axis(np.stack(planes), best[None], axis=0)[0]


def preprocess_image(image, cfg: PipelineConfig, l_max: int = L_MAX) -> np.ndarray:
    smoothed = preprocess.median_filter(image, cfg.median_kernel, l_max)
    return preprocess.adaptive_hist_eq(smoothed, cfg.ahe_tiles, cfg.ahe_clip, l_max)


def clump_candidates(preprocessed, h: int, l_max: int = L_MAX) -> np.ndarray:
    """Pixels darker than the flattened background, holes filled.

    The H-maxima transform levels the bright background into one plateau; the
    plateau is a regional maximum, and everything outside it is clump.
    """
    suppressed = morphology.h_maxima_suppress(preprocessed, h, l_max)
    background = morphology.regional_maxima(suppressed, l_max)
    return morphology.fill_holes(~background)


def segment_clumps(image, cfg: PipelineConfig, l_max: int = L_MAX):
    """Label cell clumps.

    Returns
    -------
    clumps : int32 label map
    preprocessed : the median-filtered, equalized image
    """
    img = check_gray_image(image, l_max)
    pre = preprocess_image(img, cfg, l_max)
    candidates = clump_candidates(pre, cfg.hmax_h, l_max)
    if candidates.mean() > DEGENERATE_FRACTION:
        logger.warning("degenerate scene: %.0f%% of pixels are clump candidates",
                       100 * candidates.mean())
        return np.zeros(img.shape, dtype=np.int32), pre
    labels = morphology.connected_components(candidates, 8)
    min_area = cfg.scaled_area(cfg.min_clump_area, img.shape)
    return morphology.remove_small_components(labels, min_area), pre


def segment_nuclei(preprocessed, clump, cfg: PipelineConfig, l_max: int = L_MAX):
    """Nuclei inside one clump via the prior-weighted Otsu threshold.

    Returns
    -------
    labels : int32 label map of nuclei (0 outside)
    centroids : list of (x, y)
    """
    pre = check_gray_image(preprocessed, l_max, "preprocessed")
    clump = check_mask(clump, pre.shape, "clump")
    if not clump.any():
        raise ValueError("clump is empty")
    p = normalize(compute_histogram(pre, clump, l_max))
    try:
        t = thresholding.modified_otsu(p, cfg.nucleus_prior).t
    except thresholding.DegenerateHistogramError:
        return np.zeros(pre.shape, dtype=np.int32), []
    dark = morphology.fill_holes(thresholding.apply_threshold(pre, t, clump, l_max)) & clump
    labels = morphology.connected_components(dark, 8)
    labels = morphology.remove_small_components(
        labels, cfg.scaled_area(cfg.min_nucleus_area, pre.shape))
    return labels, centroids(labels)


def centroids(labels) -> list:
    n = morphology.n_labels(labels)
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    ys = ndi.mean(np.indices(labels.shape)[0], labels, idx)
    xs = ndi.mean(np.indices(labels.shape)[1], labels, idx)
    return [(float(x), float(y)) for x, y in zip(xs, ys)]


def _disc(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return xx * xx + yy * yy <= radius * radius


def _bbox(mask, pad: int, shape):
    ys, xs = np.nonzero(mask)
    return (slice(max(ys.min() - pad, 0), min(ys.max() + pad + 1, shape[0])),
            slice(max(xs.min() - pad, 0), min(xs.max() + pad + 1, shape[1])))


def flatten_nucleus(edge_image, nucleus, seed) -> np.ndarray:
    """Replace a nucleus (grown by 2 px) with the median of the seed ring around it.

    The seed disc sits a few pixels outside the nucleus boundary, well within
    the capture range of that strong edge; without flattening the contour
    collapses back onto its own nucleus instead of expanding.
    """
    out = np.asarray(edge_image, dtype=np.float64).copy()
    core = ndi.binary_dilation(nucleus, structure=_disc(2))
    ring = seed & ~core
    if ring.any():
        out[core] = np.median(out[ring])
    return out


def segment_cell(edge_image, clump, nucleus, cfg: PipelineConfig, n_nuclei_in_clump: int,
                 l_max: int = L_MAX, info: dict | None = None) -> np.ndarray:
    """Cytoplasm mask for one nucleus.

    A clump holding a single nucleus is that cell. Otherwise a seed (the
    nucleus grown by ``init_disc_margin``) evolves under DRLSE, confined to
    the clump, and the nucleus is added to the result.

    Parameters
    ----------
    edge_image : 2-D gray image the edge indicator is computed from. The
        pipeline passes the median-filtered input; equalized texture traps
        the contour.
    """
    img = check_gray_image(edge_image, l_max, "edge_image")
    clump = check_mask(clump, img.shape, "clump")
    nucleus = check_mask(nucleus, img.shape, "nucleus")
    if not nucleus.any() or np.any(nucleus & ~clump):
        raise ValueError("nucleus must be a nonempty subset of the clump")
    if n_nuclei_in_clump < 1:
        raise ValueError("n_nuclei_in_clump must be >= 1")
    if n_nuclei_in_clump == 1:
        return clump.copy()

    p = cfg.drlse
    window = _bbox(clump, pad=2, shape=img.shape)
    sub_clump = clump[window]
    sub_nucleus = nucleus[window]
    if cfg.init_disc_margin > 0:
        seed = ndi.binary_dilation(sub_nucleus, structure=_disc(cfg.init_disc_margin))
    else:
        seed = sub_nucleus.copy()
    seed &= sub_clump
    g = levelset.edge_indicator(flatten_nucleus(img[window], sub_nucleus, seed), p.sigma)
    phi0 = levelset.init_phi(seed, p.c0)
    phi, iterations, converged = levelset.drlse_run(phi0, g, p, forbidden=~sub_clump)
    if info is not None:
        info.update(iterations=iterations, converged=converged)
    cell = np.zeros(img.shape, dtype=bool)
    cell[window] = levelset.zero_sublevel_mask(phi) & sub_clump
    return cell | nucleus


def run_pipeline(image_or_stack, cfg: PipelineConfig | None = None,
                 l_max: int = L_MAX) -> SegmentationResult:
    """Segment every cell of an image or of a focal stack (fused first)."""
    cfg = cfg or PipelineConfig()
    timings = {}
    t0 = time.perf_counter()
    try:
        if isinstance(image_or_stack, (list, tuple)):
            image = edf_fuse(image_or_stack, cfg.edf_window, l_max)
        else:
            image = check_gray_image(image_or_stack, l_max)
    except ValueError as exc:
        raise PipelineError(f"input: {exc}") from exc
    timings["edf"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        clumps, pre = segment_clumps(image, cfg, l_max)
    except ValueError as exc:
        raise PipelineError(f"clump segmentation: {exc}") from exc
    timings["clumps"] = time.perf_counter() - t0

    nuclei = np.zeros(image.shape, dtype=np.int32)
    per_clump = []
    t0 = time.perf_counter()
    for label in range(1, morphology.n_labels(clumps) + 1):
        clump = clumps == label
        try:
            labels, _ = segment_nuclei(pre, clump, cfg, l_max)
        except ValueError as exc:
            raise PipelineError(f"nucleus segmentation (clump {label}): {exc}") from exc
        masks = [labels == k for k in range(1, morphology.n_labels(labels) + 1)]
        for mask in masks:
            nuclei[mask] = morphology.n_labels(nuclei) + 1
        per_clump.append((label, clump, masks))
    timings["nuclei"] = time.perf_counter() - t0

    cells, cell_clumps, runs = [], [], []
    t0 = time.perf_counter()
    edges = preprocess.median_filter(image, cfg.median_kernel, l_max)
    for label, clump, masks in per_clump:
        for mask in masks:
            info = {}
            try:
                cells.append(segment_cell(edges, clump, mask, cfg, len(masks), l_max, info))
            except ValueError as exc:
                raise PipelineError(f"cytoplasm segmentation (clump {label}): {exc}") from exc
            cell_clumps.append(label)
            runs.append(info)
    timings["cells"] = time.perf_counter() - t0

    provenance = {
        "config": cfg.as_flat_dict(),
        "timings": timings,
        "n_clumps": morphology.n_labels(clumps),
        "n_nuclei": morphology.n_labels(nuclei),
        "drlse_runs": runs,
    }
    return SegmentationResult(clumps=clumps, nuclei=nuclei, nucleus_centroids=centroids(nuclei),
                              cells=cells, cell_clumps=cell_clumps, preprocessed=pre,
                              provenance=provenance)
