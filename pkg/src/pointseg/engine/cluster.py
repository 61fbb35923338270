"""Flat-kernel mean-shift over embeddings and conversion of clusters to instance predictions."""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import softmax

from ..models import ClusterConfig, InstancePrediction, InputError

logger = logging.getLogger(__name__)

NOISE = -1

# seeds moved per batch; bounds the seeds x points distance block
_SEED_BATCH = 512


@dataclass
class ClusterResult:
    assignments: np.ndarray
    modes: np.ndarray
    iterations_used: np.ndarray

    @property
    def num_clusters(self) -> int:
        return int(self.modes.shape[0])

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster_id)


def _shift_seeds(points: np.ndarray, cfg: ClusterConfig):
    """Move every seed to the mean of the points inside its window until it settles."""
    seeds = points.copy()
    iterations = np.zeros(points.shape[0], dtype=np.int64)
    active = np.arange(points.shape[0])
    radius2 = cfg.bandwidth ** 2
    for _ in range(cfg.max_iterations):
        if active.size == 0:
            break
        still_moving = []
        for start in range(0, active.size, _SEED_BATCH):
            batch = active[start:start + _SEED_BATCH]
            inside = cdist(seeds[batch], points, "sqeuclidean") <= radius2
            counts = inside.sum(axis=1)
            moved = inside.astype(np.float64) @ points
            has_points = counts > 0
            new = seeds[batch].copy()
            new[has_points] = moved[has_points] / counts[has_points, None]
            shift = np.linalg.norm(new - seeds[batch], axis=1)
            seeds[batch] = new
            iterations[batch] += 1
            still_moving.append(batch[(shift >= cfg.shift_tolerance) & has_points])
        active = np.concatenate(still_moving)
    return seeds, iterations


def mean_shift(embeddings: np.ndarray, cfg: ClusterConfig) -> ClusterResult:
    """Cluster embeddings; every point seeds a trajectory.

    Converged seeds closer than ``merge_radius`` are merged (transitively), the lowest
    seed index representing each group. Points join their nearest surviving mode and
    clusters smaller than ``min_cluster_points`` become noise (-1).
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise InputError(f"mean-shift needs a non-empty N x F matrix, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise InputError("embeddings must be finite")
    n = points.shape[0]

    seeds, iterations = _shift_seeds(points, cfg)

    pairs = cKDTree(seeds).query_pairs(cfg.merge_radius, output_type="ndarray")
    adjacency = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else coo_matrix((n, n))
    _, component = connected_components(adjacency, directed=False)
    # representative of a component is its lowest seed index; cluster ids follow that order
    _, first_seed = np.unique(component, return_index=True)
    representatives = np.sort(first_seed)
    modes = seeds[representatives]

    nearest = np.argmin(cdist(points, modes, "sqeuclidean"), axis=1)
    counts = np.bincount(nearest, minlength=modes.shape[0])
    keep = np.flatnonzero(counts >= cfg.min_cluster_points)
    relabel = np.full(modes.shape[0], NOISE, dtype=np.int64)
    relabel[keep] = np.arange(keep.size)
    assignments = relabel[nearest]
    logger.debug(
        f"mean-shift: {modes.shape[0]} modes, {keep.size} kept, "
        f"{int(np.sum(assignments == NOISE))} noise points, max {int(iterations.max())} iterations"
    )
    return ClusterResult(assignments, modes[keep], iterations)


def clusters_to_predictions(result: ClusterResult, logits: np.ndarray) -> List[InstancePrediction]:
    """Majority-vote class (ties to the lower class id) and mean max-probability per cluster."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[0] != result.assignments.shape[0]:
        raise InputError(
            f"logits cover {logits.shape[0]} points but assignments cover {result.assignments.shape[0]}"
        )
    probs = softmax(logits, axis=1)
    votes = np.argmax(logits, axis=1)
    confidence = probs.max(axis=1)
    predictions = []
    for cid in range(result.num_clusters):
        members = result.members(cid)
        if members.size == 0:
            continue
        tally = np.bincount(votes[members], minlength=logits.shape[1])
        predictions.append(
            InstancePrediction(
                point_indices=members,
                class_label=int(np.argmax(tally)),
                confidence=float(np.mean(confidence[members])),
                cluster_id=cid,
            )
        )
    return predictions
