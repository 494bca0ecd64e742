"""COCO-style evaluation of predicted segmentations.

AP is 101-point interpolated precision averaged over IoU thresholds
0.50:0.05:0.95; AR is recall averaged over the same thresholds at a
maximum number of detections per image (1, 10, 100). Size bins use the
ground-truth modal bounding-box pixel area; occlusion bins use the stored
per-object occlusion scores. Size and occlusion bins are half-open on the
right except the last occlusion bin, which includes 1.0.

Matching is greedy per image: predictions in descending score order (ties
by first mask pixel) each take the unmatched ground-truth object with the
highest IoU at or above the threshold, ties by object index.

Binned evaluation follows ignore semantics computed from ground truth
only: a bin restricts the ground-truth objects; predictions matched to an
out-of-bin object are ignored, and unmatched predictions are penalized as
false positives only in the unrestricted (all-sizes) metric, since an
unmatched prediction has no ground-truth bin to belong to. Objects with no
visible pixels are not evaluable and are excluded from the ground truth.
Bins containing no ground-truth objects yield NaN.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .clustering import Segmentation
from .errors import ClusterSegError, ShapeMismatchError
from .scenegen import FrameBundle

RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))
    size_bins: tuple = ((0, 32 ** 2), (32 ** 2, 96 ** 2), (96 ** 2, 100000 ** 2))
    occlusion_bins: tuple = ((0.0, 0.3), (0.3, 0.75), (0.75, 1.0))
    max_dets: tuple = (1, 10, 100)


@dataclass
class EvalResult:
    """All metrics as fractions in [0, 1]; NaN marks an empty bin."""

    ap: float = math.nan
    ap50: float = math.nan
    ap75: float = math.nan
    ap_s: float = math.nan
    ap_m: float = math.nan
    ap_l: float = math.nan
    ar: float = math.nan
    ar1: float = math.nan
    ar10: float = math.nan
    ar_s: float = math.nan
    ar_m: float = math.nan
    ar_l: float = math.nan
    ar_ho: float = math.nan
    ar_mo: float = math.nan
    ar_lo: float = math.nan


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; 0 when the union is empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def match_detections(pred_masks, gt_masks, iou_threshold: float, max_det: int):
    """Greedy matching of score-sorted predictions against ground truth.

    Returns (tp_flags, gt_matched): one bool per considered prediction and
    one per ground-truth mask.
    """
    n_pred = min(len(pred_masks), max_det)
    ious = np.array([[mask_iou(p, g) for g in gt_masks] for p in pred_masks[:n_pred]])
    tp = np.zeros(n_pred, dtype=bool)
    gt_matched = np.zeros(len(gt_masks), dtype=bool)
    for i in range(n_pred):
        j = _best_gt(ious[i], gt_matched, iou_threshold)
        if j >= 0:
            tp[i] = True
            gt_matched[j] = True
    return tp, gt_matched


def _best_gt(iou_row, taken, threshold):
    best, best_iou = -1, threshold
    for j in range(iou_row.shape[0]):
        if not taken[j] and iou_row[j] >= best_iou and (best < 0 or iou_row[j] > best_iou):
            best, best_iou = j, iou_row[j]
    return best


@dataclass
class _ImageRecord:
    ious: np.ndarray        # n_pred x n_gt, preds pre-sorted by score
    pred_scores: np.ndarray
    gt_areas: np.ndarray
    gt_occlusion: np.ndarray
    n_pred: int = field(init=False)
    n_gt: int = field(init=False)

    def __post_init__(self):
        self.n_pred, self.n_gt = self.ious.shape


def _pred_sort_keys(masks, scores):
    # Deterministic and invariant to instance relabeling: ties in score are
    # broken by the first set pixel of the mask.
    first = [int(np.flatnonzero(m.ravel())[0]) if m.any() else m.size for m in masks]
    return sorted(range(len(masks)), key=lambda i: (-scores[i], first[i]))


def _prepare_image(seg: Segmentation, frame: FrameBundle) -> _ImageRecord:
    if seg.labels.shape != frame.instance_map.shape:
        raise ShapeMismatchError(
            f"segmentation {seg.labels.shape} does not match frame {frame.instance_map.shape}")
    gt_masks, areas, occl = [], [], []
    for k in range(frame.amodal_masks.shape[0]):
        modal = frame.instance_map == k + 1
        if not modal.any():
            continue
        rows, cols = np.nonzero(modal)
        areas.append((rows.max() - rows.min() + 1) * (cols.max() - cols.min() + 1))
        occl.append(frame.occlusion_scores[k])
        gt_masks.append(modal)
    pred_masks = [seg.labels == m + 1 for m in range(len(seg.scores))]
    order = _pred_sort_keys(pred_masks, list(seg.scores))
    pred_masks = [pred_masks[i] for i in order]
    ious = np.array([[mask_iou(p, g) for g in gt_masks] for p in pred_masks],
                    dtype=np.float64).reshape(len(pred_masks), len(gt_masks))
    return _ImageRecord(ious=ious,
                        pred_scores=np.array([seg.scores[i] for i in order],
                                             dtype=np.float64),
                        gt_areas=np.array(areas, dtype=np.int64),
                        gt_occlusion=np.array(occl, dtype=np.float64))


def _match_with_ignore(rec: _ImageRecord, threshold: float, gt_keep: np.ndarray,
                       max_det: int):
    """Greedy matching where out-of-bin ground truth absorbs predictions.

    Returns (tp, ignored) per considered prediction plus the number of
    matched in-bin objects.
    """
    n_pred = min(rec.n_pred, max_det)
    taken = np.zeros(rec.n_gt, dtype=bool)
    tp = np.zeros(n_pred, dtype=bool)
    ignored = np.zeros(n_pred, dtype=bool)
    matched_keep = 0
    for i in range(n_pred):
        row = rec.ious[i]
        j = _best_gt(np.where(gt_keep, row, -1.0), taken, threshold)
        if j >= 0:
            taken[j] = True
            tp[i] = True
            matched_keep += 1
            continue
        j = _best_gt(np.where(gt_keep, -1.0, row), taken, threshold)
        if j >= 0:
            taken[j] = True
            ignored[i] = True
    return tp, ignored, matched_keep


def _interpolated_ap(tp_flags: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        return math.nan
    if tp_flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(~tp_flags)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    best_right = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    interp = np.where(idx < recall.size, best_right[np.minimum(idx, recall.size - 1)], 0.0)
    return float(interp.mean())


def _ap_over_images(records, threshold, keep_masks, max_det, penalize_unmatched):
    pooled = []
    n_gt = 0
    for rec, keep in zip(records, keep_masks):
        n_gt += int(keep.sum())
        tp, ignored, _ = _match_with_ignore(rec, threshold, keep, max_det)
        for i in range(tp.size):
            if tp[i]:
                pooled.append((i, True, rec))
            elif not ignored[i] and penalize_unmatched:
                pooled.append((i, False, rec))
    if n_gt == 0:
        return math.nan
    # Pool detections across images in global score order. Scores were
    # consumed by the per-image sort; reconstruct the global order from the
    # stored per-image rank and stable image order.
    flags = np.array([flag for _, flag, _ in _global_order(pooled, records)], dtype=bool)
    return _interpolated_ap(flags, n_gt)


def _global_order(pooled, records):
    img_index = {id(rec): i for i, rec in enumerate(records)}
    return sorted(pooled, key=lambda item: (-item[2].pred_scores[item[0]],
                                            img_index[id(item[2])], item[0]))


def _recall_over_images(records, threshold, keep_masks, max_det) -> float:
    matched = 0
    total = 0
    for rec, keep in zip(records, keep_masks):
        total += int(keep.sum())
        _, _, m = _match_with_ignore(rec, threshold, keep, max_det)
        matched += m
    if total == 0:
        return math.nan
    return matched / total


def compute_metrics(pairs, cfg: EvalConfig = EvalConfig()) -> EvalResult:
    """Evaluate (Segmentation, FrameBundle) pairs into an EvalResult."""
    pairs = list(pairs)
    if not pairs:
        raise ClusterSegError("cannot evaluate an empty dataset")
    records = [_prepare_image(seg, frame) for seg, frame in pairs]

    thresholds = cfg.iou_thresholds
    max_det = max(cfg.max_dets)
    keep_all = [np.ones(rec.n_gt, dtype=bool) for rec in records]

    def mean_over_thresholds(fn):
        vals = [fn(t) for t in thresholds]
        return math.nan if any(math.isnan(v) for v in vals) else float(np.mean(vals))

    res = EvalResult()
    res.ap = mean_over_thresholds(
        lambda t: _ap_over_images(records, t, keep_all, max_det, True))
    res.ap50 = _ap_over_images(records, 0.50, keep_all, max_det, True)
    res.ap75 = _ap_over_images(records, 0.75, keep_all, max_det, True)

    for attr, (lo, hi) in zip(("ap_s", "ap_m", "ap_l"), cfg.size_bins):
        keep = [(rec.gt_areas >= lo) & (rec.gt_areas < hi) for rec in records]
        setattr(res, attr, mean_over_thresholds(
            lambda t, keep=keep: _ap_over_images(records, t, keep, max_det, False)))

    res.ar = mean_over_thresholds(
        lambda t: _recall_over_images(records, t, keep_all, max_det))
    res.ar1 = mean_over_thresholds(
        lambda t: _recall_over_images(records, t, keep_all, cfg.max_dets[0]))
    res.ar10 = mean_over_thresholds(
        lambda t: _recall_over_images(records, t, keep_all, cfg.max_dets[1]))

    for attr, (lo, hi) in zip(("ar_s", "ar_m", "ar_l"), cfg.size_bins):
        keep = [(rec.gt_areas >= lo) & (rec.gt_areas < hi) for rec in records]
        setattr(res, attr, mean_over_thresholds(
            lambda t, keep=keep: _recall_over_images(records, t, keep, max_det)))

    last = len(cfg.occlusion_bins) - 1
    for i, (attr, (lo, hi)) in enumerate(
            zip(("ar_ho", "ar_mo", "ar_lo"), cfg.occlusion_bins)):
        if i == last:
            keep = [(rec.gt_occlusion >= lo) & (rec.gt_occlusion <= hi) for rec in records]
        else:
            keep = [(rec.gt_occlusion >= lo) & (rec.gt_occlusion < hi) for rec in records]
        setattr(res, attr, mean_over_thresholds(
            lambda t, keep=keep: _recall_over_images(records, t, keep, max_det)))
    return res


def brute_force_ap(pred_masks, scores, gt_masks,
                   iou_thresholds=EvalConfig().iou_thresholds,
                   max_det: int = 100) -> float:
    """Independent slow-path AP for tiny single-image cases (test oracle).

    Walks every prefix of the score-ordered predictions with plain loops,
    building the precision-recall curve point by point.
    """
    if not gt_masks:
        return math.nan
    order = _pred_sort_keys(list(pred_masks), list(scores))
    masks = [pred_masks[i] for i in order][:max_det]
    per_threshold = []
    for threshold in iou_thresholds:
        matched = [False] * len(gt_masks)
        flags = []
        for mask in masks:
            best, best_iou = -1, threshold
            for j, gt in enumerate(gt_masks):
                if matched[j]:
                    continue
                iou = mask_iou(mask, gt)
                if iou >= best_iou and (best < 0 or iou > best_iou):
                    best, best_iou = j, iou
            if best >= 0:
                matched[best] = True
                flags.append(True)
            else:
                flags.append(False)
        points = []
        tp = fp = 0
        for flag in flags:
            if flag:
                tp += 1
            else:
                fp += 1
            points.append((tp / len(gt_masks), tp / (tp + fp)))
        total = 0.0
        for r in RECALL_GRID:
            candidates = [p for rec, p in points if rec >= r]
            total += max(candidates) if candidates else 0.0
        per_threshold.append(total / RECALL_GRID.size)
    return float(np.mean(per_threshold))


def result_to_dict(res: EvalResult) -> dict:
    """JSON-friendly dict; NaN becomes None."""
    out = {}
    for f in fields(res):
        value = getattr(res, f.name)
        out[f.name] = None if math.isnan(value) else value
    return out


_TABLE_COLUMNS = [
    ("AP", "ap"), ("AP50", "ap50"), ("AP75", "ap75"),
    ("APS", "ap_s"), ("APM", "ap_m"), ("APL", "ap_l"),
    ("AR", "ar"), ("AR1", "ar1"), ("AR10", "ar10"),
    ("ARS", "ar_s"), ("ARM", "ar_m"), ("ARL", "ar_l"),
]
_OCC_COLUMNS = [("ARHO", "ar_ho"), ("ARMO", "ar_mo"), ("ARLO", "ar_lo")]


def format_table(res: EvalResult) -> str:
    """Aligned percent table in the standard column order."""
    def fmt(value):
        return "-" if math.isnan(value) else f"{100.0 * value:.1f}"
    lines = []
    for columns in (_TABLE_COLUMNS, _OCC_COLUMNS):
        header = " ".join(f"{name:>6}" for name, _ in columns)
        row = " ".join(f"{fmt(getattr(res, attr)):>6}" for _, attr in columns)
        lines.extend([header, row])
    return "\n".join(lines)
