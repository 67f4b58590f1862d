"""Segmentation quality: per-cell Dice, pixel TPR/FPR and object-level FNO."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ._validation import check_mask

GOOD_DICE = 0.7


def dice(x, y) -> float:
    """``2|X & Y| / (|X| + |Y|)``; two empty masks score 1."""
    x = check_mask(x, name="x")
    y = check_mask(y, np.shape(x), "y")
    denom = np.count_nonzero(x) + np.count_nonzero(y)
    if denom == 0:
        return 1.0
    return 2.0 * np.count_nonzero(x & y) / denom


def _dice_matrix(pred, gt) -> np.ndarray:
    out = np.zeros((len(gt), len(pred)))
    for i, g in enumerate(gt):
        for j, p in enumerate(pred):
            out[i, j] = dice(p, g)
    return out


def match_cells(pred, gt) -> list:
    """Greedy one-to-one matching by descending Dice.

    Returns one ``(gt_index, pred_index or None, dc)`` per ground-truth cell,
    ordered by ``gt_index``. Ties pick the lowest gt index, then the lowest
    prediction index.
    """
    pred = [check_mask(p) for p in pred]
    gt = [check_mask(g) for g in gt]
    shapes = {m.shape for m in pred + gt}
    if len(shapes) > 1:
        raise ValueError(f"masks differ in shape: {sorted(shapes)}")
    scores = _dice_matrix(pred, gt)
    matched = {}
    used = set()
    candidates = sorted(((-scores[i, j], i, j) for i in range(len(gt)) for j in range(len(pred))
                         if scores[i, j] > 0))
    for neg, i, j in candidates:
        if i in matched or j in used:
            continue
        matched[i] = (j, -neg)
        used.add(j)
    return [(i, *matched.get(i, (None, 0.0))) for i in range(len(gt))]


def _union(masks, shape):
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        out |= check_mask(m, shape)
    return out


def pixel_rates(pred, gt, prose: bool = False):
    """Pixel-level ``(tpr, fpr)`` on the unions of the masks.

    ``tpr = |S & P| / |P|`` and ``fpr = |S - P| / |S|`` with ``S`` the
    predicted union and ``P`` the ground-truth union. With ``prose=True`` the
    first value is ``|S & P| / |S|`` instead.
    """
    if not gt:
        raise ValueError("ground truth is empty")
    shape = np.shape(gt[0])
    P = _union(gt, shape)
    if not P.any():
        raise ValueError("ground-truth union is empty")
    S = _union(pred, shape)
    n_s = np.count_nonzero(S)
    if n_s == 0:
        return 0.0, 0.0
    hit = np.count_nonzero(S & P)
    first = hit / n_s if prose else hit / np.count_nonzero(P)
    return first, np.count_nonzero(S & ~P) / n_s


def object_fno(matching) -> float:
    """Fraction of ground-truth cells whose Dice is at most 0.7."""
    if not matching:
        raise ValueError("matching has no ground-truth cells")
    return sum(1 for _, _, dc in matching if dc <= GOOD_DICE) / len(matching)


@dataclass
class EvalReport:
    per_cell_dc: list
    dc_mean: float
    dc_std: float
    tpr: float
    tpr_prose: float
    fpr: float
    fno: float
    good_threshold: float = GOOD_DICE

    def to_text(self) -> str:
        buf = io.StringIO()
        for key in ("dc_mean", "dc_std", "tpr", "tpr_prose", "fpr", "fno"):
            buf.write(f"{key}={getattr(self, key):.4f}\n")
        buf.write("gt_index,pred_index,dc\n")
        for gi, pj, dc in self.per_cell_dc:
            buf.write(f"{gi + 1},{'none' if pj is None else pj + 1},{dc:.4f}\n")
        return buf.getvalue()


def evaluate(pred, gt) -> EvalReport:
    """Match cells and aggregate Dice, pixel rates and FNO."""
    matching = match_cells(pred, gt)
    if not matching:
        raise ValueError("ground truth is empty")
    dcs = np.array([dc for _, _, dc in matching])
    tpr, fpr = pixel_rates(pred, gt)
    tpr_prose, _ = pixel_rates(pred, gt, prose=True)
    return EvalReport(per_cell_dc=matching, dc_mean=float(dcs.mean()), dc_std=float(dcs.std()),
                      tpr=tpr, tpr_prose=tpr_prose, fpr=fpr, fno=object_fno(matching))
