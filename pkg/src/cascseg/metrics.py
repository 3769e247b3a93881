"""Instance segmentation metrics: IoU/Dice kernels, optimal pairing, mIoU/mDice."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .raster import as_mask


class EvalMode(Enum):
    MATCHED_ONLY = "matched_only"
    PENALIZE_MISSES = "penalize_misses"


@dataclass
class EvalReport:
    miou: float
    mdice: float
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_gt: list[int] = field(default_factory=list)
    unmatched_pred: list[int] = field(default_factory=list)
    mode: EvalMode = EvalMode.MATCHED_ONLY


def _check_pair(a, b):
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def iou(a, b) -> float:
    """|A intersect B| / |A union B|; two empty masks give 0.0 with a warning."""
    a, b = _check_pair(a, b)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        warnings.warn("IoU of two empty masks is undefined; returning 0.0", stacklevel=2)
        return 0.0
    return int(np.count_nonzero(a & b)) / union


def dice(a, b) -> float:
    """2|A intersect B| / (|A| + |B|); two empty masks give 0.0 with a warning."""
    a, b = _check_pair(a, b)
    total = int(np.count_nonzero(a)) + int(np.count_nonzero(b))
    if total == 0:
        warnings.warn("Dice of two empty masks is undefined; returning 0.0", stacklevel=2)
        return 0.0
    return 2 * int(np.count_nonzero(a & b)) / total


def iou_matrix(gt: list, pred: list) -> np.ndarray:
    gt = [as_mask(m) for m in gt]
    pred = [as_mask(m) for m in pred]
    mat = np.zeros((len(gt), len(pred)))
    for i, g in enumerate(gt):
        garea = int(np.count_nonzero(g))
        for j, p in enumerate(pred):
            inter = int(np.count_nonzero(g & p))
            if inter == 0:
                continue
            union = garea + int(np.count_nonzero(p)) - inter
            mat[i, j] = inter / union
    return mat


def assign_maximum_total(matrix: np.ndarray) -> list[tuple[int, int]]:
    """Globally optimal one-to-one assignment maximizing the score total."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.size == 0:
        return []
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def optimal_pairing(gt: list, pred: list) -> list[tuple[int, int, float]]:
    """Maximum-total-IoU one-to-one assignment (Hungarian on the IoU matrix).

    Pairs with IoU 0 are dropped. Returns (gt_index, pred_index, iou) triples.
    """
    if not gt or not pred:
        return []
    mat = iou_matrix(gt, pred)
    return [(i, j, float(mat[i, j])) for i, j in assign_maximum_total(mat) if mat[i, j] > 0]


def evaluate(gt: list, pred: list, mode: EvalMode = EvalMode.MATCHED_ONLY) -> EvalReport:
    """Score predictions against ground truth under the chosen mode.

    MATCHED_ONLY averages over optimally paired instances only (the filtering
    behavior this pipeline is normally reported with); PENALIZE_MISSES counts
    every unmatched ground-truth instance as 0 with N = |gt|. Unmatched
    predictions are surfaced in the report but penalized by neither mode.
    """
    if not gt:
        raise ValueError("no ground truth")
    pairs = optimal_pairing(gt, pred)
    matched_gt = {i for i, _, _ in pairs}
    matched_pred = {j for _, j, _ in pairs}
    dices = [dice(gt[i], pred[j]) for i, j, _ in pairs]
    ious = [v for _, _, v in pairs]
    if mode is EvalMode.MATCHED_ONLY:
        n = len(pairs)
        miou = sum(ious) / n if n else 0.0
        mdice = sum(dices) / n if n else 0.0
    else:
        n = len(gt)
        miou = sum(ious) / n
        mdice = sum(dices) / n
    return EvalReport(
        miou=miou,
        mdice=mdice,
        pairs=pairs,
        unmatched_gt=[i for i in range(len(gt)) if i not in matched_gt],
        unmatched_pred=[j for j in range(len(pred)) if j not in matched_pred],
        mode=mode,
    )
