"""Slow, obviously-correct reference implementations used by the tests."""

import itertools

import numpy as np


def brute_force_knn(coords, k):
    """All-pairs KNN; ties broken by ascending index, self excluded."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    rows = []
    for i in range(n):
        d2 = [(float(np.sum((coords[j] - coords[i]) ** 2)), j) for j in range(n) if j != i]
        d2.sort()
        rows.append([j for _, j in d2[:k]])
    return np.array(rows, dtype=np.int64)


def naive_intra(coords, ids, emb, alpha, normalization="mean", weighting="sigmoid_distance"):
    """Per-point loop over instances for the pull term."""
    instances = sorted(set(int(i) for i in ids if i >= 0))
    if not instances:
        return 0.0
    total = 0.0
    for iid in instances:
        members = [p for p in range(len(ids)) if ids[p] == iid]
        center = np.mean([coords[p] for p in members], axis=0)
        mean = np.mean([emb[p] for p in members], axis=0)
        acc = 0.0
        for p in members:
            d = float(np.linalg.norm(coords[p] - center))
            w = 1.0 / (1.0 + np.exp(-d)) if weighting == "sigmoid_distance" else 1.0
            s = float(np.linalg.norm(emb[p] - mean))
            acc += w * max(s - alpha, 0.0) ** 2
        if normalization == "mean":
            acc /= len(members)
        total += acc
    return total / len(instances)


def naive_inter(ids, emb, beta):
    """Ordered-pair loop for the push term."""
    instances = sorted(set(int(i) for i in ids if i >= 0))
    m = len(instances)
    if m < 2:
        return 0.0
    means = {iid: np.mean([emb[p] for p in range(len(ids)) if ids[p] == iid], axis=0) for iid in instances}
    total = 0.0
    for a, b in itertools.permutations(instances, 2):
        total += max(beta - float(np.linalg.norm(means[a] - means[b])), 0.0) ** 2
    return total / (m * (m - 1))


def exhaustive_ap(ranked_scores, num_gt):
    """AP from a ranked TP/FP list by evaluating the precision envelope at every recall step.

    ``ranked_scores`` is a list of booleans, highest confidence first.
    """
    if num_gt == 0:
        return None
    tp = fp = 0
    points = []
    for hit in ranked_scores:
        tp += int(hit)
        fp += int(not hit)
        points.append((tp / num_gt, tp / (tp + fp)))
    ap = 0.0
    previous_recall = 0.0
    for idx, (recall, _) in enumerate(points):
        if recall > previous_recall:
            envelope = max(p for r, p in points[idx:])
            ap += (recall - previous_recall) * envelope
            previous_recall = recall
    return ap


def brute_force_matching(predictions, gt_instances, threshold):
    """Greedy matching by confidence over (scene, points, label, confidence) tuples."""
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i][3], predictions[i][0], i))
    used = set()
    hits = []
    for i in order:
        scene, points, _, _ = predictions[i]
        best, best_iou = None, -1.0
        for j, (gt_scene, gt_points) in enumerate(gt_instances):
            if j in used or gt_scene != scene:
                continue
            inter = len(set(points) & set(gt_points))
            union = len(set(points) | set(gt_points))
            iou = inter / union
            if iou >= threshold and iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            used.add(best)
        hits.append(best is not None)
    return hits
