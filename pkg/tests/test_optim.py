"""Tests for Adam and the training loop."""

import numpy as np
import pytest

from pointseg.engine.network import DenseLayer, ModelParams, init_params
from pointseg.engine.optim import AdamState, adam_step, clip_gradients, train
from pointseg.engine.synth import generate_scene
from pointseg.models import ModelConfig, LossConfig, TrainConfig, SynthConfig, NumericalError, InputError


def scalar_params(value: float) -> ModelParams:
    """Container whose only trainable value is one scalar weight."""
    return ModelParams(
        backbone=[],
        semantic_head=DenseLayer(np.array([[value]]), np.zeros(1)),
        embedding_head=DenseLayer(np.zeros((1, 1)), np.zeros(1)),
    )


def test_first_step_is_minus_lr():
    """Test the bias-corrected first step for g = 1."""
    params = scalar_params(0.0)
    grads = scalar_params(1.0)
    new, state = adam_step(params, grads, AdamState.fresh(params))
    assert new.semantic_head.weight[0, 0] == pytest.approx(-0.001, abs=1e-9)
    assert state.step == 1


def test_zero_gradient_keeps_params():
    """Test zero gradients leave parameters unchanged and advance the step."""
    params = init_params(ModelConfig(backbone_hidden=[8], gcn_layers=1), 0)
    new, state = adam_step(params, params.zeros_like(), AdamState.fresh(params))
    assert np.array_equal(new.flatten(), params.flatten())
    assert state.step == 1


def test_step_does_not_mutate_inputs():
    """Test that adam_step is pure."""
    params = scalar_params(0.5)
    state = AdamState.fresh(params)
    adam_step(params, scalar_params(2.0), state)
    assert params.semantic_head.weight[0, 0] == 0.5
    assert state.step == 0 and not np.any(state.m.flatten())


def test_non_finite_gradient_names_group():
    """Test the diagnostic for a NaN gradient."""
    params = scalar_params(0.0)
    grads = scalar_params(np.nan)
    with pytest.raises(NumericalError, match="semantic_head.weight"):
        adam_step(params, grads, AdamState.fresh(params))


def test_clip_gradients():
    """Test global-norm clipping."""
    grads = scalar_params(10.0)
    clipped = clip_gradients(grads, 1.0)
    assert clipped.semantic_head.weight[0, 0] == pytest.approx(1.0)
    assert clip_gradients(scalar_params(0.5), 1.0).semantic_head.weight[0, 0] == 0.5


@pytest.fixture(scope="module")
def small_dataset():
    cfg = SynthConfig(points_per_scene=160, objects_min=2, objects_max=3, min_object_points=20)
    return [generate_scene(cfg, i) for i in range(4)]


MODEL = ModelConfig(backbone_hidden=[16], attention_hidden=8, gcn_layers=1, knn_k=4)


def test_zero_epochs_returns_initialization(small_dataset):
    """Test that training for zero epochs is the identity."""
    params, report, _ = train(small_dataset, MODEL, LossConfig(), TrainConfig(epochs=0, seed=3))
    assert np.array_equal(params.flatten(), init_params(MODEL, 3).flatten())
    assert report.epochs == []


def test_training_is_deterministic(small_dataset):
    """Test identical parameters and reports for identical inputs."""
    cfg = TrainConfig(epochs=2, seed=1)
    a_params, a_report, _ = train(small_dataset, MODEL, LossConfig(), cfg)
    b_params, b_report, _ = train(small_dataset, MODEL, LossConfig(), cfg)
    assert np.array_equal(a_params.flatten(), b_params.flatten())
    assert a_report == b_report
    assert a_report.table() == b_report.table()


def test_loss_decreases(small_dataset):
    """Test the total loss falls over a short run."""
    cfg = TrainConfig(epochs=15, seed=0, lr=0.005)
    _, report, state = train(small_dataset, MODEL, LossConfig(), cfg)
    assert report.epochs[-1].total < report.epochs[0].total
    assert state.step == 15 * len(small_dataset)
    for e in report.epochs:
        assert e.total == pytest.approx(e.ce + e.sal_initial + e.sal_refined, abs=1e-9)


def test_pretrain_epochs_are_ce_only(small_dataset):
    """Test the two-phase schedule reports zero structure terms while pretraining."""
    cfg = TrainConfig(epochs=3, pretrain_epochs=2, seed=0)
    _, report, _ = train(small_dataset, MODEL, LossConfig(), cfg)
    assert [e.phase for e in report.epochs] == ["pretrain", "pretrain", "joint"]
    assert report.epochs[0].sal_initial == 0.0
    assert report.epochs[2].sal_initial > 0.0


def test_empty_dataset_rejected():
    with pytest.raises(InputError):
        train([], MODEL, LossConfig(), TrainConfig())


def test_report_table_header(small_dataset):
    """Test the per-epoch table layout."""
    _, report, _ = train(small_dataset[:1], MODEL, LossConfig(), TrainConfig(epochs=1))
    lines = report.table().splitlines()
    assert lines[0] == "epoch\tce\tsal_initial\tsal_refined\ttotal"
    assert lines[1].split("\t")[0] == "1"
