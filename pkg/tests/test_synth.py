"""Tests for the synthetic room generator."""

import numpy as np
import pytest

from pointseg.engine.synth import CLASS_NAMES, NUM_CLASSES, generate_scene, generate_split
from pointseg.models import SynthConfig, DataError, ConfigurationError, validate_scene


@pytest.fixture
def small_cfg():
    return SynthConfig(num_train=6, num_test=3, points_per_scene=400)


def test_same_seed_and_index_is_bitwise_identical(small_cfg):
    """Test determinism in (seed, index)."""
    a = generate_scene(small_cfg, 4)
    b = generate_scene(small_cfg, 4)
    assert a.same_values(b)
    c = generate_scene(small_cfg.model_copy(update={"seed": 1}), 4)
    assert not np.array_equal(a.coords, c.coords)


def test_fixed_object_count_gives_floor_plus_objects():
    """Test three objects plus the floor instance."""
    cfg = SynthConfig(objects_min=3, objects_max=3)
    scene = generate_scene(cfg, 0)
    assert scene.num_instances == 4
    assert scene.num_points == 1024
    assert np.all(scene.instance_ids >= 0)


def test_generated_scenes_are_valid(small_cfg):
    """Test every generated scene passes validation."""
    for i in range(10):
        scene = generate_scene(small_cfg, i)
        assert validate_scene(scene, NUM_CLASSES) == []


def test_objects_have_enough_points():
    """Test every instance keeps at least the default clustering floor of points."""
    cfg = SynthConfig()
    for i in range(5):
        scene = generate_scene(cfg, i)
        sizes = [m.size for m in scene.instance_members()]
        assert min(sizes) >= 40


def test_floor_without_instance():
    """Test the unlabeled-floor variant."""
    scene = generate_scene(SynthConfig(floor_instance=False, points_per_scene=400), 0)
    floor = scene.semantic_labels == 0
    assert np.all(scene.instance_ids[floor] == -1)
    assert np.all(scene.instance_ids[~floor] >= 0)
    assert validate_scene(scene, NUM_CLASSES) == []


def test_instances_are_single_class(small_cfg):
    scene = generate_scene(small_cfg, 2)
    for members in scene.instance_members():
        assert np.unique(scene.semantic_labels[members]).size == 1


def test_split_counts_and_disjoint_ids(small_cfg):
    """Test split sizes, disjoint ids and regeneration."""
    train, test = generate_split(small_cfg)
    assert len(train) == 6 and len(test) == 3
    assert not {s.scene_id for s in train} & {s.scene_id for s in test}
    again, _ = generate_split(small_cfg)
    assert all(a.same_values(b) for a, b in zip(train, again))


def test_default_split_counts():
    cfg = SynthConfig()
    assert (cfg.num_train, cfg.num_test) == (200, 50)


def test_class_coverage(small_cfg):
    """Test that a handful of scenes covers every class."""
    seen = set()
    for i in range(20):
        seen |= set(np.unique(generate_scene(small_cfg, i).semantic_labels).tolist())
    assert seen == set(CLASS_NAMES)


def test_crowded_room_fails():
    """Test rejection sampling gives up in a tiny room."""
    cfg = SynthConfig(objects_min=6, objects_max=6, room_extent=(2.0, 2.0, 3.0))
    with pytest.raises(DataError, match="scene too crowded"):
        generate_scene(cfg, 0)


def test_too_few_points_per_object():
    """Test the configuration error when objects would be too sparse."""
    cfg = SynthConfig(points_per_scene=100, objects_min=7, objects_max=7)
    with pytest.raises(ConfigurationError):
        generate_scene(cfg, 0)
