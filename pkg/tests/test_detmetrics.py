import itertools

import numpy as np
import pytest

from descreg.catalog import ClassSplit
from descreg.detmetrics import (
    Detection,
    average_precision,
    evaluate,
    harmonic_mean,
    iou,
    match_detections,
    parse_detections,
    per_class_csv,
    recall_at_k,
    report_text,
    serialize_detections,
)
from descreg.errors import FormatError
from descreg.regions import GroundTruthBox


def test_iou_hand_case():
    # Overlap 5x5 = 25, union 100 + 100 - 25 = 175.
    assert iou((0, 0, 10, 10), (5, 5, 15, 15)) == pytest.approx(25 / 175, abs=1e-15)
    assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert iou((0, 0, 10, 10), (20, 20, 30, 30)) == 0.0
    assert iou((0, 0, 0, 10), (0, 0, 10, 10)) == 0.0  # degenerate


def test_harmonic_mean_reference_values():
    assert harmonic_mean(68.7, 7.9) == pytest.approx(14.170496083550912, abs=1e-9)
    assert harmonic_mean(49.9, 4.2) == pytest.approx(7.747874306839187, abs=1e-9)
    assert harmonic_mean(0.0, 10.0) == 0.0
    assert harmonic_mean(5.0, 5.0) == 5.0


def test_match_greedy_prefers_higher_score_then_higher_iou():
    gts = [
        GroundTruthBox("i", (0, 0, 10, 10), "c"),
        GroundTruthBox("i", (20, 20, 30, 30), "c"),
    ]
    dets = [
        Detection("i", (0, 0, 10, 10), "c", 0.9),
        Detection("i", (1, 1, 11, 11), "c", 0.8),  # same gt already matched
        Detection("i", (20, 20, 30, 30), "c", 0.7),
    ]
    tp, matched = match_detections(dets, gts, 0.5)
    assert tp.tolist() == [True, False, True]
    assert matched.tolist() == [True, True]


def test_match_respects_image_boundaries():
    gts = [GroundTruthBox("a", (0, 0, 10, 10), "c")]
    dets = [Detection("b", (0, 0, 10, 10), "c", 0.9)]
    tp, matched = match_detections(dets, gts, 0.5)
    assert tp.tolist() == [False]
    assert matched.tolist() == [False]


def test_ap_hand_cases():
    # Only true positives covering every ground truth: AP = 1.
    assert average_precision(np.array([True, True]), 2) == pytest.approx(1.0, abs=1e-15)
    # A false positive ranked above the only true positive halves it.
    assert average_precision(np.array([False, True]), 1) == pytest.approx(0.5, abs=1e-15)
    assert average_precision(np.array([False, False]), 1) == 0.0
    assert average_precision(np.array([], dtype=bool), 1) == 0.0
    assert average_precision(np.array([True]), 0) == 0.0


def _brute_force_ap(tp_flags, n_gt):
    flags = list(tp_flags)
    if n_gt <= 0 or not any(flags):
        return 0.0
    points = []
    tp_count = 0
    for rank, flag in enumerate(flags, start=1):
        tp_count += int(flag)
        points.append((tp_count / n_gt, tp_count / rank))
    total = 0.0
    prev_recall = 0.0
    for recall, _ in points:
        if recall == prev_recall:
            continue
        best = max(p for r, p in points if r >= recall)
        total += (recall - prev_recall) * best
        prev_recall = recall
    return total


def test_ap_matches_brute_force_random():
    rng = np.random.default_rng(23)
    for _ in range(300):
        n = int(rng.integers(1, 12))
        flags = rng.random(n) < 0.5
        n_gt = int(rng.integers(1, 8))
        if flags.sum() > n_gt:  # impossible match count; clamp flags
            idx = np.nonzero(flags)[0][n_gt:]
            flags[idx] = False
        fast = average_precision(flags, n_gt)
        slow = _brute_force_ap(flags, n_gt)
        assert fast == pytest.approx(slow, abs=1e-9)


def _brute_force_match(dets, gts, thr):
    """Greedy matching as literal nested loops over score-sorted detections."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    tp = [False] * len(dets)
    for rank, i in enumerate(order):
        best_iou, best_g = 0.0, -1
        for g, gt in enumerate(gts):
            if taken[g] or gt.image_id != dets[i].image_id:
                continue
            o = iou(dets[i].box, gt.box)
            if o >= thr and o > best_iou:
                best_iou, best_g = o, g
        if best_g >= 0:
            taken[best_g] = True
            tp[rank] = True
    return tp, taken


def _random_instance(rng):
    images = [f"im{i}" for i in range(int(rng.integers(1, 4)))]
    def box():
        x1, y1 = rng.uniform(0, 50, size=2)
        w, h = rng.uniform(1, 30, size=2)
        return (float(x1), float(y1), float(x1 + w), float(y1 + h))
    gts = [GroundTruthBox(rng.choice(images), box(), "c")
           for _ in range(int(rng.integers(0, 6)))]
    dets = [Detection(rng.choice(images), box(), "c", float(rng.random()))
            for _ in range(int(rng.integers(0, 8)))]
    return dets, gts


def test_matcher_matches_brute_force_random():
    rng = np.random.default_rng(31)
    for _ in range(200):
        dets, gts = _random_instance(rng)
        thr = float(rng.choice([0.3, 0.5, 0.7]))
        tp_fast, m_fast = match_detections(dets, gts, thr)
        tp_slow, m_slow = _brute_force_match(dets, gts, thr)
        assert tp_fast.tolist() == tp_slow
        assert m_fast.tolist() == m_slow


def test_recall_at_k_caps_per_image():
    gts = [GroundTruthBox("i", (0, 0, 10, 10), "c"),
           GroundTruthBox("i", (20, 20, 30, 30), "c")]
    hit = Detection("i", (0, 0, 10, 10), "c", 0.5)
    noise = [Detection("i", (50 + j, 50, 60 + j, 60), "c", 0.9 - 1e-3 * j)
             for j in range(3)]
    # k=2: the two highest-scoring detections are noise; the hit is cut off.
    assert recall_at_k(noise + [hit], gts, 0.5, k=2) == 0.0
    assert recall_at_k(noise + [hit], gts, 0.5, k=100) == 0.5


def test_evaluate_gzsd_aggregates():
    split = ClassSplit(("s",), ("u",))
    gts = [GroundTruthBox("a", (0, 0, 10, 10), "s"),
           GroundTruthBox("a", (20, 20, 30, 30), "u")]
    dets = [Detection("a", (0, 0, 10, 10), "s", 0.9),
            Detection("a", (20, 20, 30, 30), "u", 0.8)]
    report = evaluate(dets, gts, split, "gzsd")
    assert report.seen_map == 1.0 and report.unseen_map == 1.0 and report.hm_map == 1.0
    assert report.per_class_ap == {"s": 1.0, "u": 1.0}
    assert report.recalls_seen[0.5] == 1.0
    assert report.recalls_hm[0.4] == 1.0


def test_evaluate_zsd_drops_mixed_images():
    split = ClassSplit(("s",), ("u",))
    gts = [
        GroundTruthBox("pure", (0, 0, 10, 10), "u"),
        GroundTruthBox("mixed", (0, 0, 10, 10), "u"),
        GroundTruthBox("mixed", (20, 20, 30, 30), "s"),
    ]
    dets = [
        Detection("pure", (0, 0, 10, 10), "u", 0.9),
        Detection("mixed", (0, 0, 10, 10), "u", 0.9),
    ]
    report = evaluate(dets, gts, split, "zsd")
    # Only the pure-unseen image counts: one gt, one matching detection.
    assert report.unseen_map == 1.0
    assert report.seen_map is None and report.hm_map is None


def test_evaluate_map_ignores_classes_without_gt():
    split = ClassSplit(("s0", "s1"), ("u0",))
    gts = [GroundTruthBox("a", (0, 0, 10, 10), "s0"),
           GroundTruthBox("a", (20, 20, 30, 30), "u0")]
    dets = [Detection("a", (0, 0, 10, 10), "s0", 0.9),
            Detection("a", (20, 20, 30, 30), "u0", 0.9),
            Detection("a", (40, 40, 50, 50), "s1", 0.9)]
    report = evaluate(dets, gts, split, "gzsd")
    # s1 has no ground truth: listed with AP 0 but not averaged in.
    assert report.per_class_ap["s1"] == 0.0
    assert report.seen_map == 1.0


def test_evaluate_rejects_unknown_labels():
    split = ClassSplit(("s",), ("u",))
    with pytest.raises(ValueError):
        evaluate([Detection("a", (0, 0, 1, 1), "x", 0.5)], [], split, "gzsd")
    with pytest.raises(ValueError):
        evaluate([], [GroundTruthBox("a", (0, 0, 1, 1), "x")], split, "zsd")
    with pytest.raises(ValueError):
        evaluate([], [], split, "osd")


def test_report_text_layout():
    split = ClassSplit(("s",), ("u",))
    gts = [GroundTruthBox("a", (0, 0, 10, 10), "s"),
           GroundTruthBox("a", (20, 20, 30, 30), "u")]
    dets = [Detection("a", (0, 0, 10, 10), "s", 0.9)]
    text = report_text(evaluate(dets, gts, split, "gzsd"))
    assert "setting = gzsd" in text
    assert "map_seen = 100.00" in text
    assert "map_unseen = 0.00" in text
    assert "map_hm = 0.00" in text
    assert "re100_seen_iou0.5 = 100.00" in text
    csv = per_class_csv(evaluate(dets, gts, split, "gzsd"))
    assert csv.splitlines()[0] == "class,ap"
    assert "s,100.00" in csv.splitlines()
    assert "u,0.00" in csv.splitlines()


def test_detections_round_trip_bytes():
    dets = [Detection("a", (0.5, 1.25, 10.0, 12.5), "c", 0.875),
            Detection("b", (1, 2, 3, 4), "d", 0.5)]
    text = serialize_detections(dets)
    back = parse_detections(text)
    assert [d.image_id for d in back] == ["a", "b"]
    assert back[0].box == (0.5, 1.25, 10.0, 12.5)
    assert serialize_detections(back) == text
    with pytest.raises(FormatError):
        parse_detections("bogus header\n")
