"""Pixel-level segmentation metrics: Dice/IoU sweeps, pixel AUROC and AUPRO.

Predictions binarize with the ``score >= threshold`` rule everywhere. AUROC and
AUPRO use every distinct pooled score as a threshold; the Dice/IoU sweep uses
an evenly spaced grid.
"""
import logging
from typing import Dict, List, Literal, Sequence, Tuple

import numpy as np
from scipy import ndimage
from sklearn.metrics import roc_auc_score

from src.app.errors import ArgumentError, DimensionError, EvaluationError, UndefinedMetricError
from src.app.schemas import CurvePoint, EvalReport
from src.app.settings import settings
from src.imaging.patchflow import ScoreMap
from src.training.logger import log_method_entry

logger = logging.getLogger(__name__)

ProAveraging = Literal["components", "images"]


def _values(score_map: ScoreMap | np.ndarray) -> np.ndarray:
    return np.asarray(score_map.values if isinstance(score_map, ScoreMap) else score_map, dtype=float)


def _covered(score_map: ScoreMap | np.ndarray) -> np.ndarray:
    """Pixels that take part in a metric; a ScoreMap leaves out pixels no patch covered."""
    if isinstance(score_map, ScoreMap):
        return np.asarray(score_map.covered, dtype=bool)
    return np.ones(np.shape(score_map), dtype=bool)


def _as_mask(mask: np.ndarray) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ArgumentError("masks must be binary (values 0 or 1)")
        arr = arr.astype(bool)
    return arr


def _aligned(maps: Sequence, gts: Sequence) -> Tuple[List[np.ndarray], List[np.ndarray], List[np.ndarray]]:
    """Score values, binary masks and the covered-pixel mask of each image."""
    if len(maps) != len(gts):
        raise DimensionError(f"{len(maps)} maps but {len(gts)} masks")
    values = [_values(m) for m in maps]
    masks = [_as_mask(g) for g in gts]
    covered = [_covered(m) for m in maps]
    for i, (v, g) in enumerate(zip(values, masks)):
        if v.shape != g.shape:
            raise DimensionError(f"image {i}: map shape {v.shape} != mask shape {g.shape}")
    return values, masks, covered


def overlap_counts(pred_mask: np.ndarray, gt: np.ndarray) -> Tuple[int, int, int, int]:
    """(|A & B|, |A | B|, |A|, |B|)."""
    a, b = _as_mask(pred_mask), _as_mask(gt)
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return int((a & b).sum()), int((a | b).sum()), int(a.sum()), int(b.sum())


def iou(pred_mask: np.ndarray, gt: np.ndarray) -> float:
    """|A & B| / |A | B|; two empty masks score 1."""
    inter, union, _, _ = overlap_counts(pred_mask, gt)
    return 1.0 if union == 0 else inter / union


def dice(pred_mask: np.ndarray, gt: np.ndarray) -> float:
    """2|A & B| / (|A| + |B|); two empty masks score 1."""
    inter, _, size_a, size_b = overlap_counts(pred_mask, gt)
    total = size_a + size_b
    return 1.0 if total == 0 else 2.0 * inter / total


def default_thresholds() -> np.ndarray:
    return np.linspace(0.0, 1.0, settings.sweep_thresholds)


def threshold_sweep(
    maps: Sequence[ScoreMap | np.ndarray], gts: Sequence[np.ndarray], thresholds: np.ndarray | None = None
) -> Tuple[List[CurvePoint], List[CurvePoint]]:
    """Image-averaged Dice and IoU at each threshold, over covered pixels."""
    values, masks, covered = _aligned(maps, gts)
    if not values:
        raise EvaluationError("threshold sweep over an empty test set")
    thresholds = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=float)
    values = [v[c] for v, c in zip(values, covered)]
    masks = [g[c] for g, c in zip(masks, covered)]
    dice_curve, iou_curve = [], []
    for t in thresholds:
        preds = [v >= t for v in values]
        dice_curve.append(CurvePoint(threshold=float(t), value=float(np.mean([dice(p, g) for p, g in zip(preds, masks)]))))
        iou_curve.append(CurvePoint(threshold=float(t), value=float(np.mean([iou(p, g) for p, g in zip(preds, masks)]))))
    return dice_curve, iou_curve


def _auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    if labels.all() or not labels.any():
        raise UndefinedMetricError("AUROC needs both anomalous and normal pixels")
    return float(roc_auc_score(labels.astype(int), scores))


def pixel_auroc(maps: Sequence[ScoreMap | np.ndarray], gts: Sequence[np.ndarray], per_image: bool = False) -> float:
    """Pooled pixel AUROC over covered pixels (ties count half).

    With ``per_image`` the AUROC is computed per image and averaged over the
    images that contain both classes.
    """
    values, masks, covered = _aligned(maps, gts)
    if not values:
        raise EvaluationError("AUROC over an empty test set")
    values = [v[c] for v, c in zip(values, covered)]
    masks = [g[c] for g, c in zip(masks, covered)]
    if not per_image:
        return _auroc(np.concatenate(values), np.concatenate(masks))
    scores = [_auroc(v, g) for v, g in zip(values, masks) if g.any() and not g.all()]
    if not scores:
        raise UndefinedMetricError("no image contains both anomalous and normal pixels")
    return float(np.mean(scores))


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 8:
        return np.ones((3, 3), dtype=int)
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    raise ArgumentError(f"connectivity must be 4 or 8, got {connectivity}")


def _label(mask: np.ndarray, connectivity: int | None) -> Tuple[np.ndarray, int]:
    structure = _structure(settings.component_connectivity if connectivity is None else connectivity)
    labeled, count = ndimage.label(_as_mask(mask), structure=structure)
    return labeled, int(count)


def connected_components(mask: np.ndarray, connectivity: int | None = None) -> List[np.ndarray]:
    """One boolean mask per connected component, in label order."""
    labeled, count = _label(mask, connectivity)
    return [labeled == k for k in range(1, count + 1)]


def pro_curve(
    maps: Sequence[ScoreMap | np.ndarray],
    gts: Sequence[np.ndarray],
    pro_averaging: ProAveraging = "components",
    connectivity: int | None = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """(FPR, PRO) at every distinct pooled score, descending thresholds, starting at (0, 0).

    PRO averages |A_i & B_ik| / |B_ik| over all (image, component) pairs, or
    per image first when ``pro_averaging="images"``.
    """
    values, masks, covered = _aligned(maps, gts)
    if not values:
        raise EvaluationError("AUPRO over an empty test set")

    # components are found on the full mask, then only their covered pixels count
    labels = []
    for g, c in zip(masks, covered):
        labeled = np.where(c, _label(g, connectivity)[0], 0)
        sizes = np.bincount(labeled.ravel()).astype(float)
        labels.append((labeled[c], sizes, int(np.count_nonzero(sizes[1:]))))
    n_components = sum(count for _, _, count in labels)
    if n_components == 0:
        raise UndefinedMetricError("AUPRO needs at least one ground-truth component")
    n_images = sum(1 for _, _, count in labels if count > 0)

    scores, normal, weight = [], [], []
    for v, g, c, (labeled, sizes, count) in zip(values, masks, covered, labels):
        scores.append(v[c])
        normal.append(~g[c])
        per_pixel = np.zeros(sizes.size)
        if count:
            present = np.flatnonzero(sizes[1:]) + 1
            if pro_averaging == "components":
                per_pixel[present] = 1.0 / (n_components * sizes[present])
            else:
                per_pixel[present] = 1.0 / (n_images * count * sizes[present])
        weight.append(per_pixel[labeled])
    scores, normal, weight = np.concatenate(scores), np.concatenate(normal), np.concatenate(weight)
    n_normal = int(normal.sum())
    if n_normal == 0:
        raise UndefinedMetricError("AUPRO needs normal pixels for the false-positive rate")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    fp = np.cumsum(normal[order])
    pro = np.cumsum(weight[order])
    # last index of each run of tied scores
    ends = np.flatnonzero(np.r_[sorted_scores[1:] != sorted_scores[:-1], True])
    fpr = np.r_[0.0, fp[ends] / n_normal]
    pro = np.r_[0.0, np.minimum(pro[ends], 1.0)]
    return fpr, pro


def aupro(
    maps: Sequence[ScoreMap | np.ndarray],
    gts: Sequence[np.ndarray],
    fpr_limit: float | None = None,
    pro_averaging: ProAveraging = "components",
    connectivity: int | None = None,
) -> float:
    """Area under PRO vs FPR on [0, fpr_limit], normalized by fpr_limit."""
    limit = settings.aupro_fpr_limit if fpr_limit is None else fpr_limit
    if not 0.0 < limit <= 1.0:
        raise ArgumentError(f"fpr_limit must be in (0, 1], got {limit}")
    fpr, pro = pro_curve(maps, gts, pro_averaging, connectivity)
    inside = fpr <= limit
    x, y = fpr[inside], pro[inside]
    if x[-1] < limit:
        # first point past the limit; fpr reaches 1 at the lowest threshold
        k = int(np.argmax(fpr > limit))
        y_cut = np.interp(limit, [fpr[k - 1], fpr[k]], [pro[k - 1], pro[k]])
        x, y = np.r_[x, limit], np.r_[y, y_cut]
    return float(np.clip(np.trapz(y, x) / limit, 0.0, 1.0))


@log_method_entry(run_type="evaluate")
def evaluate(
    maps: Sequence[ScoreMap | np.ndarray],
    gts: Sequence[np.ndarray],
    thresholds: np.ndarray | None = None,
    fpr_limit: float | None = None,
    per_image_auroc: bool = False,
    pro_averaging: ProAveraging = "components",
) -> EvalReport:
    if not maps:
        raise EvaluationError("test set is empty")
    limit = settings.aupro_fpr_limit if fpr_limit is None else fpr_limit
    thresholds = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=float)
    dice_curve, iou_curve = threshold_sweep(maps, gts, thresholds)
    report = EvalReport(
        auroc=pixel_auroc(maps, gts, per_image=per_image_auroc),
        aupro=aupro(maps, gts, limit, pro_averaging),
        fpr_limit=limit,
        thresholds=[float(t) for t in thresholds],
        dice_curve=dice_curve,
        iou_curve=iou_curve,
        n_images=len(maps),
    )
    logger.info(f"evaluate: n_images={report.n_images} auroc={report.auroc:.4f} aupro={report.aupro:.4f}")
    return report


def aggregate(reports: Sequence[EvalReport]) -> Dict[str, Tuple[float, float]]:
    """Mean and population standard deviation of each scalar metric across runs."""
    if not reports:
        raise EvaluationError("nothing to aggregate")
    out = {}
    for name in ("auroc", "aupro"):
        values = np.array([getattr(r, name) for r in reports])
        out[name] = (float(values.mean()), float(values.std()))
    for name in ("best_dice", "best_iou"):
        values = np.array([getattr(r, name).value for r in reports if getattr(r, name) is not None])
        if values.size:
            out[name] = (float(values.mean()), float(values.std()))
    return out
