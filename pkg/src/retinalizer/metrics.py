"""Scoring metrics: mean foreground IoU, pixel-exact F1, and MAE.

IoU and F1 are reported as percentages in [0, 100]; the degenerate case where
neither prediction nor ground truth contains any foreground scores 100 (a
healthy scan predicted healthy is a perfect answer, not a vacuous one).
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes differ ({a.shape} vs {b.shape})")


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-class foreground IoU x100 over classes present in either map."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    _check_same_shape(pred, gt, "iou")
    classes = np.union1d(np.unique(pred), np.unique(gt))
    classes = classes[classes != 0]
    if classes.size == 0:
        return 100.0
    scores = []
    for c in classes:
        p = pred == c
        g = gt == c
        union = np.logical_or(p, g).sum()
        inter = np.logical_and(p, g).sum()
        scores.append(inter / union if union else 1.0)
    return float(np.mean(scores) * 100.0)


def f1(pred_mask: np.ndarray, gt_mask: np.ndarray) -> float:
    """Pixel-exact F1 x100 between binary masks; both empty scores 100."""
    pred_mask = np.asarray(pred_mask).astype(bool)
    gt_mask = np.asarray(gt_mask).astype(bool)
    _check_same_shape(pred_mask, gt_mask, "f1")
    tp = np.logical_and(pred_mask, gt_mask).sum()
    fp = np.logical_and(pred_mask, ~gt_mask).sum()
    fn = np.logical_and(~pred_mask, gt_mask).sum()
    if tp + fp + fn == 0:
        return 100.0
    return float(2.0 * tp / (2.0 * tp + fp + fn) * 100.0)


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute error over all pixels and channels, in [0, 1] scale."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_same_shape(pred, gt, "mae")
    return float(np.abs(pred - gt).mean())
