"""Test configuration for pytest."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to Python path
project_root = Path(__file__).parent.parent
src_path = str(project_root / "src")
sys.path.insert(0, src_path)

from pointseg.models import Scene, ModelConfig, LossConfig  # noqa: E402

RUN_SLOW = os.environ.get("POINTSEG_RUN_SLOW") == "1"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs, enabled with POINTSEG_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set POINTSEG_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def test_config_path():
    """Path of the small test configuration."""
    return str(project_root / "tests" / "test_config.yaml")


@pytest.fixture
def small_model_config():
    """Narrow network that keeps tests fast."""
    return ModelConfig(backbone_hidden=[16], attention_hidden=8, gcn_layers=2, knn_k=4)


@pytest.fixture
def loss_config():
    return LossConfig()


@pytest.fixture
def two_blob_scene():
    """Two well separated clusters of 20 points, one instance each, classes 1 and 2."""
    rng = np.random.default_rng(3)
    a = rng.normal(scale=0.1, size=(20, 3))
    b = rng.normal(scale=0.1, size=(20, 3)) + np.array([4.0, 0.0, 0.0])
    return Scene(
        coords=np.vstack([a, b]),
        colors=rng.uniform(size=(40, 3)),
        semantic_labels=np.array([1] * 20 + [2] * 20),
        instance_ids=np.array([0] * 20 + [1] * 20),
        scene_id="blobs",
    )
