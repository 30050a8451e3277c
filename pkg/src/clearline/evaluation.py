"""Detection evaluation: matching, ROC sweep, AUROC, working points.

The false positive rate is defined at frame level: the fraction of
negative frames (frames whose ground-truth list is empty) containing at
least one surviving detection. Per-instance false positives have no
natural denominator in detection, so this is the primary x-axis; a mean
false-positives-per-frame curve is available separately for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .masks import Detection

DEFAULT_IOU_THRESHOLD = 0.5


class UndefinedTprError(ValueError):
    """No ground-truth instances: the true positive rate has no denominator."""


class UndefinedFprError(ValueError):
    """No negative frames: the false positive rate has no denominator."""


@dataclass(frozen=True)
class GroundTruthSet:
    """frame_id -> list of ground-truth boxes; empty lists mark negative frames."""

    frames: dict

    def __post_init__(self):
        for frame_id, boxes in self.frames.items():
            for b in boxes:
                x0, y0, x1, y1 = b
                if x0 > x1 or y0 > y1:
                    raise ValueError(f"malformed ground-truth box {b} in frame {frame_id}")

    @property
    def total_instances(self) -> int:
        return sum(len(b) for b in self.frames.values())

    @property
    def negative_frames(self) -> list:
        return [f for f, boxes in self.frames.items() if not boxes]


@dataclass(frozen=True)
class MatchResult:
    true_positives: int
    false_positives: int
    false_negatives: int
    pairs: tuple  # (pred_index, gt_index, iou) per matched pair


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    threshold: float | None  # None on the synthetic (0,0)/(1,1) anchors


@dataclass(frozen=True)
class RocCurve:
    points: tuple

    @property
    def fprs(self) -> np.ndarray:
        return np.array([p.fpr for p in self.points])

    @property
    def tprs(self) -> np.ndarray:
        return np.array([p.tpr for p in self.points])


@dataclass(frozen=True)
class WorkingPoint:
    threshold: float | None
    sensitivity: float
    fpr: float
    unreachable: bool = False


def iou(a, b) -> float:
    """Intersection over union, continuous corner-coordinate convention."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def match_detections(preds, gt_boxes, iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> MatchResult:
    """Greedy matching within one frame.

    Predictions are visited in descending score; each claims the unclaimed
    ground-truth box of highest IoU if that IoU reaches the threshold.
    Order of the input lists never changes the outcome: ties break on
    canonical box coordinates.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, preds[i].bbox))
    gt_order = sorted(range(len(gt_boxes)), key=lambda j: tuple(gt_boxes[j]))
    claimed = set()
    pairs = []
    for i in order:
        best_j, best_iou = None, 0.0
        for j in gt_order:
            if j in claimed:
                continue
            v = iou(preds[i].bbox, gt_boxes[j])
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None and best_iou >= iou_threshold:
            claimed.add(best_j)
            pairs.append((i, best_j, best_iou))
    tp = len(pairs)
    return MatchResult(
        true_positives=tp,
        false_positives=len(preds) - tp,
        false_negatives=len(gt_boxes) - tp,
        pairs=tuple(sorted(pairs)),
    )


def _group_by_frame(preds):
    by_frame = {}
    for p in preds:
        by_frame.setdefault(p.frame_id, []).append(p)
    return by_frame


def roc_curve(
    preds,
    gts: GroundTruthSet,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> RocCurve:
    """Sweep the score threshold over all distinct prediction scores.

    TPR = matched ground truth / total ground truth; FPR = fraction of
    negative frames holding at least one surviving detection. Anchors
    (0,0) and (1,1) are always appended.

    One greedy matching pass per frame covers every threshold: greedy
    matching visits predictions in score order, so the matching of the
    survivors at any threshold is the full matching restricted to them.
    """
    total_gt = gts.total_instances
    negatives = gts.negative_frames
    if total_gt == 0:
        raise UndefinedTprError("ground truth holds no instances")
    if not negatives:
        raise UndefinedFprError("ground truth holds no negative frames")
    unknown = {p.frame_id for p in preds} - set(gts.frames)
    if unknown:
        raise ValueError(f"predictions reference frames absent from ground truth: {sorted(unknown)}")

    by_frame = _group_by_frame(preds)
    neg_set = set(negatives)
    matched_scores = []
    neg_top_scores = []
    for frame_id, frame_preds in by_frame.items():
        if frame_id in neg_set:
            neg_top_scores.append(max(p.score for p in frame_preds))
        else:
            m = match_detections(frame_preds, gts.frames[frame_id], iou_threshold)
            matched_scores.extend(frame_preds[i].score for i, _, _ in m.pairs)
    matched_scores = np.sort(np.asarray(matched_scores))
    neg_top_scores = np.sort(np.asarray(neg_top_scores))

    thresholds = np.unique(np.asarray([p.score for p in preds]))[::-1]
    tp = len(matched_scores) - np.searchsorted(matched_scores, thresholds, side="left")
    fp_frames = len(neg_top_scores) - np.searchsorted(neg_top_scores, thresholds, side="left")
    points = [RocPoint(0.0, 0.0, None)]
    points.extend(
        RocPoint(f / len(negatives), t / total_gt, float(thr))
        for thr, t, f in zip(thresholds, tp, fp_frames)
    )
    points.append(RocPoint(1.0, 1.0, None))
    return RocCurve(points=tuple(points))


def fp_per_frame_curve(preds, gts: GroundTruthSet, iou_threshold: float = DEFAULT_IOU_THRESHOLD):
    """Diagnostic alternative: mean false positives per frame vs TPR.

    The x-axis is unbounded, so no AUROC or working point is defined over
    this curve; it is report content only.
    """
    total_gt = gts.total_instances
    if total_gt == 0:
        raise UndefinedTprError("ground truth holds no instances")
    n_frames = len(gts.frames)
    if n_frames == 0:
        raise ValueError("ground truth holds no frames")
    by_frame = _group_by_frame(preds)
    matched_scores = []
    for frame_id, frame_preds in by_frame.items():
        m = match_detections(frame_preds, gts.frames.get(frame_id, []), iou_threshold)
        matched_scores.extend(frame_preds[i].score for i, _, _ in m.pairs)
    matched_scores = np.sort(np.asarray(matched_scores))
    all_scores = np.sort(np.asarray([p.score for p in preds]))
    thresholds = np.unique(all_scores)[::-1]
    tp = len(matched_scores) - np.searchsorted(matched_scores, thresholds, side="left")
    surviving = len(all_scores) - np.searchsorted(all_scores, thresholds, side="left")
    return [
        {
            "threshold": float(thr),
            "fp_per_frame": float(s - t) / n_frames,
            "tpr": float(t) / total_gt,
        }
        for thr, t, s in zip(thresholds, tp, surviving)
    ]


def auroc(curve: RocCurve) -> float:
    """Trapezoidal integral of the curve over fpr in [0, 1]."""
    return float(np.trapezoid(curve.tprs, curve.fprs))


def working_point(curve: RocCurve, target_specificity: float) -> WorkingPoint:
    """Highest-sensitivity measured point with FPR <= 1 - target specificity.

    When no measured point qualifies, the (0,0) anchor is returned with
    sensitivity 0 and the unreachable flag set.
    """
    if not 0.0 <= target_specificity <= 1.0:
        raise ValueError("target_specificity must be in [0, 1]")
    bound = 1.0 - target_specificity
    candidates = [p for p in curve.points if p.threshold is not None and p.fpr <= bound]
    if not candidates:
        return WorkingPoint(threshold=None, sensitivity=0.0, fpr=0.0, unreachable=True)
    best = max(candidates, key=lambda p: (p.tpr, -p.fpr))
    return WorkingPoint(threshold=best.threshold, sensitivity=best.tpr, fpr=best.fpr)


def max_accuracy(curve: RocCurve, positive_fraction: float = 0.5) -> float:
    """max over curve points of p*TPR + (1-p)*(1-FPR)."""
    if not 0.0 <= positive_fraction <= 1.0:
        raise ValueError("positive_fraction must be in [0, 1]")
    p = positive_fraction
    return max(p * pt.tpr + (1.0 - p) * (1.0 - pt.fpr) for pt in curve.points)


# ---------------------------------------------------------------------------
# File formats and reporting
# ---------------------------------------------------------------------------

def read_detection_log(path) -> list:
    preds = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                preds.append(Detection.from_record(json.loads(line)))
    return preds


def write_detection_log(path, preds) -> None:
    with open(path, "w") as f:
        for p in preds:
            f.write(json.dumps(p.to_record(), sort_keys=True) + "\n")


def read_ground_truth(path) -> GroundTruthSet:
    frames = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            frame_id = int(rec["frame_id"])
            if frame_id in frames:
                raise ValueError(f"duplicate frame_id {frame_id} in ground truth")
            frames[frame_id] = [tuple(float(v) for v in b) for b in rec["boxes"]]
    return GroundTruthSet(frames=frames)


def evaluation_report(
    preds,
    gts: GroundTruthSet,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    target_specificities=(0.95,),
    positive_fraction: float = 0.5,
    include_fp_per_frame: bool = False,
) -> dict:
    curve = roc_curve(preds, gts, iou_threshold)
    report = {
        "auroc": auroc(curve),
        "max_accuracy": max_accuracy(curve, positive_fraction),
        "positive_fraction": positive_fraction,
        "iou_threshold": iou_threshold,
        "counts": {
            "predictions": len(preds),
            "ground_truth_instances": gts.total_instances,
            "frames": len(gts.frames),
            "negative_frames": len(gts.negative_frames),
        },
        "curve": [
            {"fpr": p.fpr, "tpr": p.tpr, "threshold": p.threshold} for p in curve.points
        ],
        "working_points": [
            {
                "target_specificity": s,
                "threshold": wp.threshold,
                "sensitivity": wp.sensitivity,
                "fpr": wp.fpr,
                "unreachable": wp.unreachable,
            }
            for s in target_specificities
            for wp in (working_point(curve, s),)
        ],
    }
    if include_fp_per_frame:
        report["fp_per_frame_curve"] = fp_per_frame_curve(preds, gts, iou_threshold)
    return report


def roc_svg(curve: RocCurve, width: int = 480, height: int = 480) -> str:
    """Standalone SVG of the ROC curve: axes, 0.2 grid, chance diagonal."""
    pad = 56
    pw, ph = width - 2 * pad, height - 2 * pad

    def sx(fpr):
        return pad + fpr * pw

    def sy(tpr):
        return height - pad - tpr * ph

    grid = []
    for v in (0.2, 0.4, 0.6, 0.8):
        grid.append(
            f'<line x1="{sx(v):.1f}" y1="{sy(0):.1f}" x2="{sx(v):.1f}" y2="{sy(1):.1f}" '
            'stroke="#ddd" stroke-width="1"/>'
        )
        grid.append(
            f'<line x1="{sx(0):.1f}" y1="{sy(v):.1f}" x2="{sx(1):.1f}" y2="{sy(v):.1f}" '
            'stroke="#ddd" stroke-width="1"/>'
        )
    ticks = []
    for v in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        ticks.append(
            f'<text x="{sx(v):.1f}" y="{height - pad + 18}" font-size="11" '
            f'text-anchor="middle">{v:.1f}</text>'
        )
        ticks.append(
            f'<text x="{pad - 8}" y="{sy(v) + 4:.1f}" font-size="11" '
            f'text-anchor="end">{v:.1f}</text>'
        )
    pts = " ".join(f"{sx(p.fpr):.2f},{sy(p.tpr):.2f}" for p in curve.points)
    return f"""<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">
<rect width="{width}" height="{height}" fill="white"/>
{''.join(grid)}
<line x1="{sx(0):.1f}" y1="{sy(0):.1f}" x2="{sx(1):.1f}" y2="{sy(1):.1f}" stroke="#bbb" stroke-width="1" stroke-dasharray="4 4"/>
<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>
<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="2"/>
{''.join(ticks)}
<text x="{width / 2:.0f}" y="{height - 12}" font-size="13" text-anchor="middle">false positive rate</text>
<text x="16" y="{height / 2:.0f}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {height / 2:.0f})">true positive rate</text>
</svg>
"""
