"""Tests for the finite-difference gradient checker."""

import numpy as np
import pytest

from pointseg.engine.gradcheck import (
    MAX_DIRECTION_DRAWS,
    hinge_pattern,
    run_gradcheck,
    smooth_difference,
)
from pointseg.models import LossConfig, ModelConfig, NumericalError, Scene


def test_default_run_passes():
    """Test every parameter group and loss path on the 60-point, 3-instance scene."""
    report = run_gradcheck(seed=0)
    expected = {"backbone", "semantic_head", "embedding_head", "gcn.0.f", "gcn.0.W", "gcn.1.f", "gcn.1.W"}
    assert set(report.groups) == expected
    assert set(report.paths) == {"structure_loss->embeddings", "cross_entropy->logits"}
    assert report.passed, report.failures


@pytest.mark.parametrize("seed", range(30))
def test_seed_sweep(seed):
    """Test thirty seeds pass at the default step of 1e-5."""
    report = run_gradcheck(seed=seed)
    assert report.passed, (seed, report.failures)


def test_variants_pass():
    """Test the sum normalisation, uniform weighting and mean aggregation variants."""
    report = run_gradcheck(
        seed=0,
        model_cfg=ModelConfig(aggregation="mean", gcn_layers=1),
        loss_cfg=LossConfig(intra_normalization="sum", structure_weighting="uniform"),
    )
    assert report.passed, report.failures


def test_corrupted_gradient_is_reported():
    """Test the detector names the corrupted group."""
    report = run_gradcheck(seed=0, corrupt_group="gcn.1.f")
    assert not report.passed
    assert "gcn.1.f" in report.failures
    assert any(line.endswith("FAIL") for line in report.lines())


def _pair_scene():
    return Scene(
        coords=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        colors=np.zeros((2, 3)),
        semantic_labels=np.array([1, 1]),
        instance_ids=np.array([0, 0]),
        scene_id="pair",
    )


def test_hinge_pattern_flips_at_alpha():
    """Test member distances just below and above alpha give different intra patterns."""
    cfg = LossConfig(alpha=0.5, beta=1.5)
    scene = _pair_scene()
    below = np.array([[0.5 - 1e-7, 0.0], [-(0.5 - 1e-7), 0.0]])
    above = np.array([[0.5 + 1e-7, 0.0], [-(0.5 + 1e-7), 0.0]])
    assert not hinge_pattern(scene, below, cfg).any()
    assert hinge_pattern(scene, above, cfg).all()


def _abs_plus_square(x):
    return abs(x[0]) + x[1] ** 2, np.array([x[0] > 0.0])


def test_direction_crossing_a_kink_is_redrawn():
    """Test a step pair straddling |x| at zero is rejected and the next direction used."""
    x = np.array([1e-6, 0.3])
    directions = iter([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    direction, numeric, rejected = smooth_difference(_abs_plus_square, x, lambda: next(directions), 1e-5)
    assert rejected == 1
    assert np.array_equal(direction, [0.0, 1.0])
    assert numeric == pytest.approx(0.6, rel=1e-8)


def test_no_kink_free_direction_raises():
    """Test exhausting the direction draws raises a numerical error."""
    x = np.array([1e-6, 0.3])
    draws = []

    def draw():
        draws.append(1)
        return np.array([1.0, 0.0])

    with pytest.raises(NumericalError):
        smooth_difference(_abs_plus_square, x, draw, 1e-5)
    assert len(draws) == MAX_DIRECTION_DRAWS
