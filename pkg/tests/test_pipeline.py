"""Tests for inference wiring and the ablation grid."""

import numpy as np
import pytest

from pointseg.core import SceneWorkerPool, ablation_table, build_graphs, evaluate_results, infer_scenes, run_ablation
from pointseg.core.pipeline import ABLATION_HEADER
from pointseg.engine.network import init_params
from pointseg.engine.synth import generate_scene
from pointseg.models import ClusterConfig, EvalConfig, LossConfig, ModelConfig, SynthConfig, TrainConfig


@pytest.fixture(scope="module")
def scenes():
    cfg = SynthConfig(points_per_scene=160, objects_min=2, objects_max=2, min_object_points=20)
    return [generate_scene(cfg, i) for i in range(3)]


MODEL = ModelConfig(backbone_hidden=[16], attention_hidden=8, gcn_layers=1, knn_k=4)


def test_graphs_are_thread_count_independent(scenes):
    """Test graph construction gives the same result on one or several threads."""
    one = build_graphs(scenes, 4, SceneWorkerPool(1))
    many = build_graphs(scenes, 4, SceneWorkerPool(3))
    assert all(np.array_equal(a.neighbors, b.neighbors) for a, b in zip(one, many))


def test_infer_scenes(scenes):
    """Test per-scene outputs and that every clustered point belongs to one prediction."""
    params = init_params(MODEL, 0)
    results = infer_scenes(scenes, params, MODEL, ClusterConfig(min_cluster_points=1))
    assert [r.scene_id for r in results] == [s.scene_id for s in scenes]
    for scene, result in zip(scenes, results):
        assert result.semantic.shape == (scene.num_points,)
        assert result.refined_embeddings.shape == (scene.num_points, MODEL.embed_dim)
        covered = np.concatenate([p.point_indices for p in result.predictions])
        assert np.array_equal(np.sort(covered), np.flatnonzero(result.clusters.assignments >= 0))


def test_evaluate_results_shapes(scenes):
    params = init_params(MODEL, 0)
    results = infer_scenes(scenes, params, MODEL, ClusterConfig())
    ev = evaluate_results(results, scenes, MODEL.num_classes, EvalConfig())
    assert set(ev.mean_ap) == {0.5, 0.25}
    assert 0.0 <= ev.miou <= 1.0


def test_ablation_table_schema(scenes):
    """Test the ablation grid trains every variant and prints the documented columns."""
    rows = run_ablation(
        scenes[:2], scenes[2:], MODEL, LossConfig(), TrainConfig(epochs=1), ClusterConfig(min_cluster_points=5),
        variants=[("vanilla", 0), ("structure", 1)],
    )
    assert [r.variant for r in rows] == ["vanillaLoss+gcn x0", "structureLoss+gcn x1"]
    assert all(np.isfinite(r.final_total_loss) for r in rows)
    lines = ablation_table(rows).splitlines()
    assert lines[0].split("\t") == list(ABLATION_HEADER)
    assert len(lines) == 3
    assert all(len(line.split("\t")) == len(ABLATION_HEADER) for line in lines)
