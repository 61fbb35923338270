"""Spatial k-nearest-neighbour graph built once per scene from coordinates."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..models import InputError

logger = logging.getLogger(__name__)

# extra candidates fetched per row so boundary ties can be resolved without a second query
_TIE_PAD = 4


@dataclass(frozen=True, eq=False)
class KnnGraph:
    """Neighbour indices per point, nearest first, ties by ascending index, self excluded."""

    neighbors: np.ndarray
    k: int

    def __post_init__(self):
        neighbors = np.array(self.neighbors, dtype=np.int64, copy=True)
        neighbors.setflags(write=False)
        object.__setattr__(self, "neighbors", neighbors)

    @property
    def num_points(self) -> int:
        return int(self.neighbors.shape[0])


def _sorted_candidates(coords: np.ndarray, rows: np.ndarray, cand: np.ndarray):
    """Order candidate neighbours by (squared distance, index) with self pushed last."""
    d2 = np.sum((coords[cand] - coords[rows][:, None, :]) ** 2, axis=-1)
    d2 = np.where(cand == rows[:, None], np.inf, d2)
    order = np.lexsort((cand, d2), axis=-1)
    return np.take_along_axis(cand, order, axis=-1), np.take_along_axis(d2, order, axis=-1)


def _exact_row(tree: cKDTree, coords: np.ndarray, i: int, radius: float, k: int) -> np.ndarray:
    """Resolve one row by collecting everything inside the k-th distance."""
    cand = np.asarray(tree.query_ball_point(coords[i], r=radius), dtype=np.int64)
    cand = cand[cand != i]
    d2 = np.sum((coords[cand] - coords[i]) ** 2, axis=-1)
    order = np.lexsort((cand, d2))
    return cand[order[:k]]


def build_knn_graph(coords: np.ndarray, k: int) -> KnnGraph:
    """Exact k nearest neighbours of every point under Euclidean distance.

    Rows are deterministic: equal distances are ordered by ascending point index.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise InputError(f"coords must be N x 3, got shape {coords.shape}")
    n = coords.shape[0]
    if k < 1:
        raise InputError(f"k must be positive, got {k}")
    if n <= k:
        raise InputError(
            f"KNN graph needs more points than neighbours: N={n}, k={k} (need N >= k + 1)",
            details={"num_points": n, "k": k},
        )
    if not np.all(np.isfinite(coords)):
        raise InputError("coordinates must be finite")

    tree = cKDTree(coords)
    width = min(n, k + 1 + _TIE_PAD)
    _, cand = tree.query(coords, k=width)
    cand = np.asarray(cand, dtype=np.int64).reshape(n, width)
    rows = np.arange(n)
    cand_sorted, d2_sorted = _sorted_candidates(coords, rows, cand)
    neighbors = cand_sorted[:, :k].copy()

    if width < n:
        # a row whose k-th distance reaches the farthest candidate may hide tied points
        finite = np.where(np.isfinite(d2_sorted), d2_sorted, -np.inf)
        farthest = finite.max(axis=1)
        kth = d2_sorted[:, k - 1]
        suspect = np.flatnonzero(kth >= farthest * (1.0 - 1e-9))
        for i in suspect:
            radius = np.sqrt(kth[i]) * (1.0 + 1e-9) + 1e-12
            neighbors[i] = _exact_row(tree, coords, int(i), radius, k)
        if suspect.size:
            logger.debug(f"Resolved {suspect.size} KNN rows with boundary ties")

    return KnnGraph(neighbors=neighbors, k=k)
