"""Detection metrics: IoU, greedy matching, AP, recall@K, and ZSD/GZSD reports.

Matching follows the usual detection protocol: detections of one class are
visited in descending score order (stable, so ties keep input order) and each
one greedily claims the unmatched same-image ground-truth box with the
highest IoU at or above the threshold.  Average precision integrates the
precision envelope over all recall points.  Recall@K keeps the top K
detections per image across classes before matching.

The two evaluation settings differ only in restriction:

* ``zsd``   - unseen classes only, on test images whose ground truth is
  entirely unseen;
* ``gzsd``  - seen and unseen subsets evaluated separately over all test
  images, combined with the harmonic mean.

Metric values are fractions in [0, 1]; text reports print them as
percentages (x100).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .catalog import ClassSplit
from .errors import FormatError
from .regions import Box
from .textio import format_vector, parse_real, parse_vector, require_header, split_lines

__all__ = [
    "Detection",
    "EvalReport",
    "iou",
    "match_detections",
    "average_precision",
    "recall_at_k",
    "harmonic_mean",
    "evaluate",
    "parse_detections",
    "serialize_detections",
    "load_detections",
    "save_detections",
    "report_text",
    "per_class_csv",
]

DETS_HEADER = "descreg-dets v1"

RECALL_IOUS = (0.4, 0.5, 0.6)
RECALL_K = 100
AP_IOU = 0.5


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: Box
    label: str
    score: float


@dataclass
class EvalReport:
    """Per-class APs plus the seen/unseen aggregates for one setting.

    ``seen_map``, ``hm_map`` and the seen/hm recall tables are None for the
    zsd setting, where only unseen classes are in play.
    """

    setting: str
    ap_iou: float
    per_class_ap: dict[str, float]
    unseen_map: float
    seen_map: float | None
    hm_map: float | None
    recalls_unseen: dict[float, float]
    recalls_seen: dict[float, float] | None
    recalls_hm: dict[float, float] | None


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; degenerate boxes contribute 0."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _by_descending_score(detections: list[Detection]) -> list[int]:
    # Stable sort: equal scores keep input order.
    return sorted(range(len(detections)), key=lambda i: -detections[i].score)


def match_detections(
    detections: list[Detection],
    ground_truth: list,
    iou_threshold: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy same-class matching; callers pass one class at a time.

    Returns (tp_flags, gt_matched): tp_flags[i] says whether the i-th
    detection in descending score order is a true positive, gt_matched[g]
    whether ground-truth g was claimed.  Each ground truth matches at most
    one detection; among eligible boxes the highest IoU wins, ties going to
    the lowest ground-truth index.
    """
    order = _by_descending_score(detections)
    tp = np.zeros(len(detections), dtype=bool)
    matched = np.zeros(len(ground_truth), dtype=bool)
    gt_by_image: dict[str, list[int]] = {}
    for g, gt in enumerate(ground_truth):
        gt_by_image.setdefault(gt.image_id, []).append(g)
    for rank, det_index in enumerate(order):
        det = detections[det_index]
        best_iou = 0.0
        best_g = -1
        for g in gt_by_image.get(det.image_id, ()):
            if matched[g]:
                continue
            overlap = iou(det.box, ground_truth[g].box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_g = g
        if best_g >= 0:
            tp[rank] = True
            matched[best_g] = True
    return tp, matched


def average_precision(tp_flags: np.ndarray, n_ground_truth: int) -> float:
    """Area under the precision envelope over all recall points.

    ``tp_flags`` must be in descending score order.  Returns 0 when there is
    nothing to score (no ground truth, or no true positives).
    """
    flags = np.asarray(tp_flags, dtype=bool)
    if n_ground_truth <= 0 or flags.size == 0 or not flags.any():
        return 0.0
    tp_cum = np.cumsum(flags)
    ranks = np.arange(1, flags.size + 1)
    precision = tp_cum / ranks
    recall = tp_cum / n_ground_truth
    # Precision envelope: best precision achievable at or beyond each rank.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    previous = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - previous) * envelope))


def harmonic_mean(seen: float, unseen: float) -> float:
    if seen < 0 or unseen < 0:
        raise ValueError("harmonic mean needs non-negative inputs")
    if seen + unseen == 0.0:
        return 0.0
    return 2.0 * seen * unseen / (seen + unseen)


def _class_ap(
    detections: list[Detection], ground_truth: list, label: str, iou_threshold: float
) -> float:
    dets = [d for d in detections if d.label == label]
    gts = [g for g in ground_truth if g.label == label]
    tp, _ = match_detections(dets, gts, iou_threshold)
    return average_precision(tp, len(gts))


def recall_at_k(
    detections: list[Detection],
    ground_truth: list,
    iou_threshold: float,
    k: int = RECALL_K,
) -> float:
    """Fraction of ground truth matched by the top-k detections per image."""
    if k < 1:
        raise ValueError("k must be positive")
    if not ground_truth:
        return 0.0
    kept: list[Detection] = []
    by_image: dict[str, list[Detection]] = {}
    for det in detections:
        by_image.setdefault(det.image_id, []).append(det)
    for image_id in by_image:
        image_dets = by_image[image_id]
        order = _by_descending_score(image_dets)
        kept.extend(image_dets[i] for i in order[:k])
    matched_total = 0
    labels = sorted({g.label for g in ground_truth})
    for label in labels:
        dets = [d for d in kept if d.label == label]
        gts = [g for g in ground_truth if g.label == label]
        _, matched = match_detections(dets, gts, iou_threshold)
        matched_total += int(matched.sum())
    return matched_total / len(ground_truth)


def _subset_metrics(
    detections: list[Detection],
    ground_truth: list,
    labels: tuple[str, ...],
    ap_iou: float,
    recall_ious: tuple[float, ...],
    k: int,
) -> tuple[dict[str, float], float, dict[float, float]]:
    label_set = set(labels)
    dets = [d for d in detections if d.label in label_set]
    gts = [g for g in ground_truth if g.label in label_set]
    per_class = {label: _class_ap(dets, gts, label, ap_iou) for label in labels}
    with_gt = [label for label in labels if any(g.label == label for g in gts)]
    mean_ap = (
        float(np.mean([per_class[label] for label in with_gt])) if with_gt else 0.0
    )
    recalls = {t: recall_at_k(dets, gts, t, k) for t in recall_ious}
    return per_class, mean_ap, recalls


def evaluate(
    detections: list[Detection],
    ground_truth: list,
    split: ClassSplit,
    setting: str,
    ap_iou: float = AP_IOU,
    recall_ious: tuple[float, ...] = RECALL_IOUS,
    k: int = RECALL_K,
) -> EvalReport:
    """Score detections against ground truth under one evaluation setting.

    Mean APs average the per-class APs of classes that have ground truth in
    the evaluated subset; classes without any are still listed per class
    (their AP is 0 by convention) but do not dilute the mean.
    """
    if setting not in ("zsd", "gzsd"):
        raise ValueError(f"unknown setting {setting!r}")
    known = set(split.classes)
    for det in detections:
        if det.label not in known:
            raise ValueError(f"detection carries unknown class {det.label!r}")
    for gt in ground_truth:
        if gt.label not in known:
            raise ValueError(f"ground truth carries unknown class {gt.label!r}")

    if setting == "zsd":
        unseen_set = set(split.unseen)
        images: dict[str, bool] = {}
        for gt in ground_truth:
            images.setdefault(gt.image_id, True)
            if gt.label not in unseen_set:
                images[gt.image_id] = False
        eligible = {image_id for image_id, ok in images.items() if ok}
        dets = [d for d in detections if d.image_id in eligible]
        gts = [g for g in ground_truth if g.image_id in eligible]
        per_class, mean_ap, recalls = _subset_metrics(
            dets, gts, split.unseen, ap_iou, recall_ious, k
        )
        return EvalReport(
            setting="zsd",
            ap_iou=ap_iou,
            per_class_ap=per_class,
            unseen_map=mean_ap,
            seen_map=None,
            hm_map=None,
            recalls_unseen=recalls,
            recalls_seen=None,
            recalls_hm=None,
        )

    per_seen, seen_map, recalls_seen = _subset_metrics(
        detections, ground_truth, split.seen, ap_iou, recall_ious, k
    )
    per_unseen, unseen_map, recalls_unseen = _subset_metrics(
        detections, ground_truth, split.unseen, ap_iou, recall_ious, k
    )
    per_class = dict(per_seen)
    per_class.update(per_unseen)
    recalls_hm = {
        t: harmonic_mean(recalls_seen[t], recalls_unseen[t]) for t in recall_ious
    }
    return EvalReport(
        setting="gzsd",
        ap_iou=ap_iou,
        per_class_ap=per_class,
        unseen_map=unseen_map,
        seen_map=seen_map,
        hm_map=harmonic_mean(seen_map, unseen_map),
        recalls_unseen=recalls_unseen,
        recalls_seen=recalls_seen,
        recalls_hm=recalls_hm,
    )


def parse_detections(text: str) -> list[Detection]:
    lines = split_lines(text)
    require_header(lines, DETS_HEADER)
    out: list[Detection] = []
    for offset, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 4:
            raise FormatError(f"line {offset}: expected 4 tab-separated fields")
        image_id, box_text, label, score_text = fields
        if image_id == "" or label == "":
            raise FormatError(f"line {offset}: empty image id or class")
        box_values = parse_vector(box_text, offset, expected_dim=4)
        box = (
            float(box_values[0]),
            float(box_values[1]),
            float(box_values[2]),
            float(box_values[3]),
        )
        if not (box[0] <= box[2] and box[1] <= box[3]):
            raise FormatError(f"line {offset}: box corners are not ordered")
        out.append(Detection(image_id, box, label, parse_real(score_text, offset)))
    return out


def serialize_detections(detections: list[Detection]) -> str:
    lines = [DETS_HEADER]
    for det in detections:
        lines.append(
            "\t".join(
                (det.image_id, format_vector(det.box), det.label, repr(float(det.score)))
            )
        )
    return "\n".join(lines) + "\n"


def load_detections(path) -> list[Detection]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_detections(fh.read())


def save_detections(detections: list[Detection], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_detections(detections))


def _pct(value: float) -> str:
    return f"{100.0 * value:.2f}"


def report_text(report: EvalReport) -> str:
    """Flat ``key = value`` lines; metric values as percentages."""
    buf = io.StringIO()
    buf.write(f"setting = {report.setting}\n")
    buf.write(f"ap_iou = {report.ap_iou:g}\n")
    if report.seen_map is not None:
        buf.write(f"map_seen = {_pct(report.seen_map)}\n")
    buf.write(f"map_unseen = {_pct(report.unseen_map)}\n")
    if report.hm_map is not None:
        buf.write(f"map_hm = {_pct(report.hm_map)}\n")
    for threshold in sorted(report.recalls_unseen):
        if report.recalls_seen is not None:
            buf.write(f"re{RECALL_K}_seen_iou{threshold:g} = {_pct(report.recalls_seen[threshold])}\n")
        buf.write(f"re{RECALL_K}_unseen_iou{threshold:g} = {_pct(report.recalls_unseen[threshold])}\n")
        if report.recalls_hm is not None:
            buf.write(f"re{RECALL_K}_hm_iou{threshold:g} = {_pct(report.recalls_hm[threshold])}\n")
    return buf.getvalue()


def per_class_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    buf.write("class,ap\n")
    for name, value in report.per_class_ap.items():
        buf.write(f"{name},{_pct(value)}\n")
    return buf.getvalue()
