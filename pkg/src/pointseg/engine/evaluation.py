"""Instance AP at IoU thresholds and semantic IoU."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models import InstancePrediction, Scene, InputError

logger = logging.getLogger(__name__)

AP_SWEEP_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))


def point_iou(a, b) -> float:
    """Set IoU of two point-index collections."""
    a = np.unique(np.asarray(a, dtype=np.int64))
    b = np.unique(np.asarray(b, dtype=np.int64))
    if a.size == 0 and b.size == 0:
        raise InputError("IoU is undefined for two empty sets")
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / (a.size + b.size - inter)


@dataclass
class GroundTruthInstance:
    scene_index: int
    instance_id: int
    class_label: int
    point_indices: np.ndarray


def ground_truth_instances(scene: Scene, scene_index: int = 0) -> List[GroundTruthInstance]:
    """GT instances of a scene; the class is the majority semantic label of the members."""
    out = []
    for iid, members in enumerate(scene.instance_members()):
        label = int(np.argmax(np.bincount(scene.semantic_labels[members])))
        out.append(GroundTruthInstance(scene_index, iid, label, members))
    return out


def precision_envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the monotone precision envelope (all-point interpolation)."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def match_predictions(predictions: Sequence[Sequence[InstancePrediction]], ground_truth: Sequence[Scene],
                      class_id: int, iou_threshold: float,
                      gt_cache: Optional[List[List[GroundTruthInstance]]] = None) -> Tuple[np.ndarray, int]:
    """Greedy confidence-ordered matching for one class.

    Returns the TP flag per ranked prediction and the number of GT instances.
    """
    if len(predictions) != len(ground_truth):
        raise InputError(f"{len(predictions)} prediction lists for {len(ground_truth)} scenes")
    gts = gt_cache if gt_cache is not None else [
        ground_truth_instances(scene, i) for i, scene in enumerate(ground_truth)
    ]
    per_scene_gt = [[g for g in scene_gts if g.class_label == class_id] for scene_gts in gts]
    num_gt = sum(len(g) for g in per_scene_gt)

    ranked = []
    for s, (scene, preds) in enumerate(zip(ground_truth, predictions)):
        for position, pred in enumerate(preds):
            if pred.class_label == class_id:
                ranked.append((-pred.confidence, scene.scene_id, pred.cluster_id, position, s, pred))
    ranked.sort(key=lambda r: r[:4])

    matched = [np.zeros(len(g), dtype=bool) for g in per_scene_gt]
    tp = np.zeros(len(ranked), dtype=bool)
    for rank, (*_, s, pred) in enumerate(ranked):
        best, best_iou = -1, -1.0
        for j, gt in enumerate(per_scene_gt[s]):
            if matched[s][j]:
                continue
            iou = point_iou(pred.point_indices, gt.point_indices)
            if iou >= iou_threshold and iou > best_iou:
                best, best_iou = j, iou
        if best >= 0:
            matched[s][best] = True
            tp[rank] = True
    return tp, num_gt


def average_precision(predictions: Sequence[Sequence[InstancePrediction]], ground_truth: Sequence[Scene],
                      class_id: int, iou_threshold: float,
                      gt_cache: Optional[List[List[GroundTruthInstance]]] = None) -> Optional[float]:
    """AP of one class pooled over scenes; ``None`` when the class has no GT instance."""
    tp, num_gt = match_predictions(predictions, ground_truth, class_id, iou_threshold, gt_cache)
    return _ap_from_matches(tp, num_gt)


def _ap_from_matches(tp: np.ndarray, num_gt: int) -> Optional[float]:
    if num_gt == 0:
        return None
    if tp.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(~tp)
    recall = tp_cum / num_gt
    precision = tp_cum / (tp_cum + fp_cum)
    return precision_envelope_ap(recall, precision)


@dataclass
class SemanticIoU:
    per_class: Dict[int, float]
    miou: float


def semantic_miou(pred_labels: Sequence[np.ndarray], gt_labels: Sequence[np.ndarray], num_classes: int) -> SemanticIoU:
    """Per-class TP/(TP+FP+FN) pooled over scenes; the mean covers classes present in GT."""
    if len(pred_labels) != len(gt_labels):
        raise InputError(f"{len(pred_labels)} predicted label arrays for {len(gt_labels)} scenes")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for pred, gt in zip(pred_labels, gt_labels):
        pred = np.asarray(pred, dtype=np.int64)
        gt = np.asarray(gt, dtype=np.int64)
        if pred.shape != gt.shape:
            raise InputError(f"label arrays differ in shape: {pred.shape} vs {gt.shape}")
        if pred.size and (pred.min() < 0 or pred.max() >= num_classes or gt.min() < 0 or gt.max() >= num_classes):
            raise InputError(f"labels must lie in [0, {num_classes})")
        np.add.at(confusion, (gt, pred), 1)
    tp = np.diag(confusion)
    gt_count = confusion.sum(axis=1)
    pred_count = confusion.sum(axis=0)
    per_class = {}
    for c in np.flatnonzero(gt_count > 0):
        per_class[int(c)] = float(tp[c] / (gt_count[c] + pred_count[c] - tp[c]))
    miou = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return SemanticIoU(per_class, miou)


@dataclass
class ClassCounts:
    tp: int
    fp: int
    fn: int


@dataclass
class EvalResult:
    per_class_ap: Dict[float, Dict[int, float]]
    mean_ap: Dict[float, float]
    per_class_iou: Dict[int, float]
    miou: float
    counts: Dict[float, Dict[int, ClassCounts]]
    ap_sweep: Optional[float] = None
    sweep_per_threshold: Dict[float, float] = field(default_factory=dict)

    def table(self) -> str:
        """Tab-separated class table followed by the summary rows."""
        thresholds = sorted(self.per_class_ap, reverse=True)
        classes = sorted(set(self.per_class_iou) | {c for t in thresholds for c in self.per_class_ap[t]})
        header = ["class"] + [f"ap{int(round(t * 100))}" for t in thresholds] + ["iou"]
        lines = ["\t".join(header)]
        for c in classes:
            row = [str(c)]
            for t in thresholds:
                ap = self.per_class_ap[t].get(c)
                row.append("nan" if ap is None else f"{ap:.6f}")
            iou = self.per_class_iou.get(c)
            row.append("nan" if iou is None else f"{iou:.6f}")
            lines.append("\t".join(row))
        summary = ["mean"] + [f"{self.mean_ap[t]:.6f}" for t in thresholds] + [f"{self.miou:.6f}"]
        lines.append("\t".join(summary))
        if self.ap_sweep is not None:
            lines.append(f"ap_sweep\t{self.ap_sweep:.6f}")
        return "\n".join(lines) + "\n"


def evaluate(predictions: Sequence[Sequence[InstancePrediction]], ground_truth: Sequence[Scene],
             pred_labels: Sequence[np.ndarray], num_classes: int,
             thresholds: Sequence[float] = (0.5, 0.25), ap_sweep: bool = False) -> EvalResult:
    """AP per class and threshold, mAP over classes with GT, and semantic IoU."""
    gts = [ground_truth_instances(scene, i) for i, scene in enumerate(ground_truth)]

    def mean_ap_at(t: float):
        per_class, counts = {}, {}
        for c in range(num_classes):
            tp, num_gt = match_predictions(predictions, ground_truth, c, t, gts)
            if num_gt == 0:
                continue
            per_class[c] = _ap_from_matches(tp, num_gt)
            hits = int(tp.sum())
            counts[c] = ClassCounts(hits, int(tp.size - hits), int(num_gt - hits))
        mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
        return per_class, mean, counts

    per_class_ap, mean_ap, counts = {}, {}, {}
    for t in thresholds:
        per_class_ap[t], mean_ap[t], counts[t] = mean_ap_at(t)

    sweep_value, sweep = None, {}
    if ap_sweep:
        for t in AP_SWEEP_THRESHOLDS:
            sweep[float(t)] = mean_ap[t] if t in mean_ap else mean_ap_at(float(t))[1]
        sweep_value = float(np.mean(list(sweep.values())))

    sem = semantic_miou(pred_labels, [s.semantic_labels for s in ground_truth], num_classes)
    logger.debug(f"evaluated {len(ground_truth)} scenes: mAP={mean_ap} mIoU={sem.miou:.4f}")
    return EvalResult(per_class_ap, mean_ap, sem.per_class, sem.miou, counts, sweep_value, sweep)
