"""Desk-scale end-to-end runs on the default synthetic split.

Enabled with POINTSEG_RUN_SLOW=1.
"""

import numpy as np
import pytest

from pointseg.core import SceneWorkerPool, ablation_table, build_graphs, evaluate_results, infer_scenes, run_ablation
from pointseg.cli.formats import Checkpoint, encode_checkpoint
from pointseg.engine.evaluation import point_iou, ground_truth_instances
from pointseg.engine.optim import train
from pointseg.engine.spatial import build_knn_graph
from pointseg.engine.synth import generate_split
from pointseg.models import ClusterConfig, EvalConfig, LossConfig, ModelConfig, SynthConfig, TrainConfig

from oracles import brute_force_knn

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def split():
    return generate_split(SynthConfig())


@pytest.fixture(scope="module")
def trained(split):
    train_scenes, _ = split
    model_cfg, loss_cfg, train_cfg = ModelConfig(), LossConfig(), TrainConfig(epochs=40)
    graphs = build_graphs(train_scenes, model_cfg.knn_k)
    params, report, state = train(train_scenes, model_cfg, loss_cfg, train_cfg, graphs=graphs)
    return params, report, state


def test_knn_oracle_on_many_scenes():
    """Test the KNN graph against brute force on 100 random scenes."""
    rng = np.random.default_rng(0)
    for i in range(100):
        k = [1, 4, 8, 16][i % 4]
        n = int(rng.integers(k + 1, 2001 if i % 10 == 0 else 400))
        coords = rng.uniform(0.0, 10.0, size=(n, 3))
        assert np.array_equal(build_knn_graph(coords, k).neighbors, brute_force_knn(coords, k))


def test_training_halves_the_loss(trained):
    _, report, _ = trained
    assert report.epochs[-1].total < 0.5 * report.epochs[0].total


def test_held_out_scores(split, trained):
    """Test mAP@0.5 and mIoU on the 50 held-out scenes."""
    _, test_scenes = split
    params, _, _ = trained
    results = infer_scenes(test_scenes, params, ModelConfig(), ClusterConfig())
    ev = evaluate_results(results, test_scenes, 4, EvalConfig())
    assert ev.mean_ap[0.5] >= 0.90
    assert ev.miou >= 0.90


def test_training_scene_instances_are_found(split, trained):
    """Test every GT instance of a training scene has a prediction with IoU >= 0.5."""
    train_scenes, _ = split
    params, _, _ = trained
    scene = train_scenes[0]
    result = infer_scenes([scene], params, ModelConfig(), ClusterConfig())[0]
    for gt in ground_truth_instances(scene):
        assert max((point_iou(p.point_indices, gt.point_indices) for p in result.predictions), default=0.0) >= 0.5


def test_rerun_is_bitwise_identical(split, trained):
    """Test that retraining with the same seed gives the same checkpoint bytes and report."""
    train_scenes, _ = split
    params, report, state = trained
    again_params, again_report, again_state = train(train_scenes, ModelConfig(), LossConfig(), TrainConfig(epochs=40))
    a = encode_checkpoint(Checkpoint(ModelConfig(), LossConfig(), params, 0, TrainConfig(epochs=40), state))
    b = encode_checkpoint(Checkpoint(ModelConfig(), LossConfig(), again_params, 0, TrainConfig(epochs=40), again_state))
    assert a == b
    assert report.table() == again_report.table()


def test_ablation_grid(split):
    """Test all six variants train without numerical failure and tabulate in the report schema."""
    train_scenes, test_scenes = split
    rows = run_ablation(train_scenes, test_scenes, ModelConfig(), LossConfig(), TrainConfig(epochs=10),
                        ClusterConfig(), pool=SceneWorkerPool(1))
    assert len(rows) == 6
    assert all(np.isfinite(r.final_total_loss) for r in rows)
    assert {(r.loss, r.gcn_layers) for r in rows} == {(loss, g) for loss in ("vanilla", "structure") for g in (0, 1, 2)}

    lines = ablation_table(rows).splitlines()
    assert lines[0].split("\t") == [
        "variant", "loss", "gcn_layers", "ap50", "ap25", "ap_sweep", "miou", "final_total_loss",
    ]
    assert len(lines) == 7
    for line in lines[1:]:
        cells = line.split("\t")
        assert len(cells) == 8
        assert all(np.isfinite(float(c)) for c in cells[3:])
