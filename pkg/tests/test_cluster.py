"""Tests for mean-shift clustering and cluster-to-instance conversion."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointseg.engine.cluster import NOISE, ClusterResult, clusters_to_predictions, mean_shift
from pointseg.models import ClusterConfig, InputError


def blobs(seed, num_blobs=4, per_blob=30, dim=4, sigma=0.05, separation=3.0):
    """Gaussian blobs whose centers are at least ``separation`` apart."""
    rng = np.random.default_rng(seed)
    centers = []
    while len(centers) < num_blobs:
        c = rng.uniform(-6.0, 6.0, size=dim)
        if all(np.linalg.norm(c - o) >= separation for o in centers):
            centers.append(c)
    labels = np.repeat(np.arange(num_blobs), per_blob)
    points = np.array(centers)[labels] + rng.normal(scale=sigma, size=(labels.size, dim))
    order = rng.permutation(labels.size)
    return points[order], labels[order]


def same_partition(a, b):
    """Equal up to relabeling."""
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


@pytest.mark.parametrize("seed", range(50))
def test_recovers_separated_blobs(seed):
    """Test exact recovery of well separated 4-D blobs at bandwidth 1."""
    points, labels = blobs(seed)
    result = mean_shift(points, ClusterConfig(bandwidth=1.0))
    assert result.num_clusters == 4
    assert not np.any(result.assignments == NOISE)
    assert same_partition(result.assignments, labels)


def test_single_point_cloud():
    """Test one point forms one cluster when the size floor allows it."""
    result = mean_shift(np.zeros((1, 4)), ClusterConfig(min_cluster_points=1))
    assert result.assignments.tolist() == [0]
    assert result.num_clusters == 1


def test_small_clusters_become_noise():
    """Test that clusters under the size floor are marked as noise."""
    points, _ = blobs(0, num_blobs=2, per_blob=20)
    outlier = np.full((3, 4), 50.0)
    result = mean_shift(np.vstack([points, outlier]), ClusterConfig(min_cluster_points=10))
    assert result.num_clusters == 2
    assert np.all(result.assignments[-3:] == NOISE)
    assert np.all(result.assignments[:-3] >= 0)


def test_cluster_ids_follow_lowest_member():
    """Test that cluster 0 contains point 0 and ids are consecutive."""
    points, _ = blobs(7)
    result = mean_shift(points, ClusterConfig())
    assert result.assignments[0] == 0
    assert sorted(set(result.assignments.tolist())) == list(range(result.num_clusters))


def test_deterministic():
    points, _ = blobs(3)
    a = mean_shift(points, ClusterConfig())
    b = mean_shift(points, ClusterConfig())
    assert np.array_equal(a.assignments, b.assignments)
    assert np.array_equal(a.modes, b.modes)


def test_invalid_input():
    with pytest.raises(InputError):
        mean_shift(np.zeros((0, 4)), ClusterConfig())
    with pytest.raises(InputError):
        mean_shift(np.full((3, 4), np.nan), ClusterConfig())


def test_predictions_majority_and_confidence():
    """Test majority class per cluster, ties to the lower class, and mean max-probability."""
    assignments = np.array([0, 0, 0, 1, 1, NOISE])
    result = ClusterResult(assignments, np.zeros((2, 4)), np.ones(6, dtype=int))
    logits = np.array([
        [5.0, 0.0, 0.0],
        [5.0, 0.0, 0.0],
        [0.0, 5.0, 0.0],
        [0.0, 0.0, 5.0],
        [0.0, 5.0, 0.0],
        [9.0, 0.0, 0.0],
    ])
    preds = clusters_to_predictions(result, logits)
    assert [p.class_label for p in preds] == [0, 1]
    assert preds[0].point_indices.tolist() == [0, 1, 2]
    expected = np.exp(5.0) / (np.exp(5.0) + 2.0)
    assert preds[0].confidence == pytest.approx(expected)
    assert all(5 not in p.point_indices for p in preds)


def test_predictions_reject_shape_mismatch():
    result = ClusterResult(np.zeros(3, dtype=int), np.zeros((1, 4)), np.ones(3, dtype=int))
    with pytest.raises(InputError):
        clusters_to_predictions(result, np.zeros((2, 3)))


def test_identical_points_form_one_cluster():
    """Test a cloud of coincident points yields a single cluster."""
    result = mean_shift(np.full((20, 4), 0.3), ClusterConfig(bandwidth=1.0))
    assert result.num_clusters == 1
    assert result.assignments.tolist() == [0] * 20
    assert np.allclose(result.modes, 0.3)


@pytest.mark.parametrize("seed", range(5))
def test_partition_is_permutation_consistent(seed):
    """Test reordering the input permutes the partition and nothing else."""
    points, _ = blobs(seed)
    perm = np.random.default_rng(seed + 100).permutation(points.shape[0])
    cfg = ClusterConfig(bandwidth=1.0)
    original = mean_shift(points, cfg)
    shuffled = mean_shift(points[perm], cfg)
    assert same_partition(shuffled.assignments, original.assignments[perm])


def test_rerun_on_modes_is_stable():
    """Test clustering the returned modes gives back the same modes."""
    points, _ = blobs(7)
    first = mean_shift(points, ClusterConfig(bandwidth=1.0))
    second = mean_shift(first.modes, ClusterConfig(bandwidth=1.0, min_cluster_points=1))
    assert second.num_clusters == first.num_clusters
    assert second.assignments.tolist() == list(range(first.num_clusters))
    assert np.allclose(second.modes, first.modes, atol=1e-12, rtol=0.0)


@settings(max_examples=40, deadline=None)
@given(
    sizes=st.lists(st.integers(min_value=1, max_value=12), min_size=1, max_size=4),
    seed=st.integers(min_value=0, max_value=2 ** 32 - 1),
)
def test_tight_far_groups_are_recovered(sizes, seed):
    """Test groups of diameter under bw/2 separated by more than 2 bw come back exactly."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    offsets = rng.normal(size=(labels.size, 3))
    # inside a ball of radius 0.24, so every group diameter stays below 0.5
    offsets *= 0.24 * rng.uniform(size=(labels.size, 1)) / np.linalg.norm(offsets, axis=1, keepdims=True)
    centers = np.zeros((len(sizes), 3))
    centers[:, 0] = 3.0 * np.arange(len(sizes))
    points = centers[labels] + offsets

    result = mean_shift(points, ClusterConfig(bandwidth=1.0, min_cluster_points=1))
    assert result.num_clusters == len(sizes)
    assert not np.any(result.assignments == NOISE)
    assert same_partition(result.assignments, labels)


def test_uniform_logits_give_confidence_one_over_classes():
    """Test equal logits across 5 classes give confidence 0.2 and the lowest class."""
    result = ClusterResult(
        assignments=np.zeros(6, dtype=np.int64),
        modes=np.zeros((1, 2)),
        iterations_used=np.ones(6, dtype=np.int64),
    )
    (prediction,) = clusters_to_predictions(result, np.zeros((6, 5)))
    assert prediction.confidence == pytest.approx(0.2, abs=1e-15)
    assert prediction.class_label == 0
    assert prediction.point_indices.tolist() == list(range(6))
