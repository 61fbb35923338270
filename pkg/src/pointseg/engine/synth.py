"""Deterministic synthetic rooms: a floor plus sphere, box and cylinder objects.

Each scene draws from its own PCG64 stream seeded by ``SeedSequence([seed, index])``,
so scenes are reproducible individually and independent of generation order.
Coordinates and colors are rounded to float32 so scenes survive the on-disk format
bit for bit.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..models import SynthConfig, Scene, DataError, ConfigurationError, remap_instances

logger = logging.getLogger(__name__)

FLOOR, SPHERE, BOX, CYLINDER = 0, 1, 2, 3
NUM_CLASSES = 4
CLASS_NAMES = {FLOOR: "floor", SPHERE: "sphere", BOX: "box", CYLINDER: "cylinder"}

BASE_COLORS = {
    FLOOR: (0.55, 0.50, 0.45),
    SPHERE: (0.85, 0.20, 0.20),
    BOX: (0.20, 0.55, 0.85),
    CYLINDER: (0.30, 0.80, 0.30),
}

MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass
class _Placed:
    kind: int
    center: np.ndarray     # xy of the footprint center
    footprint: float       # radius of the xy bounding circle
    dims: Tuple[float, ...]


def _scene_rng(cfg: SynthConfig, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, index])))


def _draw_shape(rng: np.random.Generator, kind: int) -> Tuple[Tuple[float, ...], float]:
    """Size parameters and footprint radius for a primitive."""
    if kind == SPHERE:
        r = rng.uniform(0.3, 0.6)
        return (r,), r
    if kind == BOX:
        half = tuple(rng.uniform(0.25, 0.6, size=3))
        return half, float(np.hypot(half[0], half[1]))
    r = rng.uniform(0.2, 0.45)
    h = rng.uniform(0.6, 1.5)
    return (r, h), r


def _sample_sphere(rng, n, dims):
    (r,) = dims
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * r + np.array([0.0, 0.0, r])


def _sample_box(rng, n, dims):
    hx, hy, hz = dims
    # five faces; the bottom rests on the floor
    faces = np.array([4 * hx * hy, 4 * hy * hz, 4 * hy * hz, 4 * hx * hz, 4 * hx * hz])
    face = rng.choice(5, size=n, p=faces / faces.sum())
    u = rng.uniform(-1.0, 1.0, size=(n, 3)) * np.array([hx, hy, hz])
    u[face == 0, 2] = hz
    u[face == 1, 0] = hx
    u[face == 2, 0] = -hx
    u[face == 3, 1] = hy
    u[face == 4, 1] = -hy
    return u + np.array([0.0, 0.0, hz])


def _sample_cylinder(rng, n, dims):
    r, h = dims
    side, top = 2 * np.pi * r * h, np.pi * r * r
    on_top = rng.uniform(size=n) < top / (side + top)
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    radius = np.where(on_top, r * np.sqrt(rng.uniform(size=n)), r)
    z = np.where(on_top, h, rng.uniform(0.0, h, size=n))
    return np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)


_SAMPLERS = {SPHERE: _sample_sphere, BOX: _sample_box, CYLINDER: _sample_cylinder}


def _place_objects(rng: np.random.Generator, cfg: SynthConfig, count: int, scene_id: str) -> List[_Placed]:
    placed: List[_Placed] = []
    ex, ey, _ = cfg.room_extent
    for _ in range(count):
        kind = int(rng.integers(SPHERE, CYLINDER + 1))
        dims, footprint = _draw_shape(rng, kind)
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            center = np.array([
                rng.uniform(footprint, max(footprint, ex - footprint)),
                rng.uniform(footprint, max(footprint, ey - footprint)),
            ])
            if all(
                np.linalg.norm(center - other.center)
                >= max(cfg.min_center_separation, footprint + other.footprint + cfg.min_clearance)
                for other in placed
            ):
                placed.append(_Placed(kind, center, footprint, dims))
                break
        else:
            raise DataError(
                "scene too crowded",
                details={"scene": scene_id, "placed": len(placed), "requested": count},
            )
    return placed


def _split_points(cfg: SynthConfig, num_objects: int) -> Tuple[int, List[int]]:
    floor_points = int(round(cfg.points_per_scene * cfg.floor_fraction))
    object_points = cfg.points_per_scene - floor_points
    base, extra = divmod(object_points, num_objects)
    if base < cfg.min_object_points:
        raise ConfigurationError(
            f"{cfg.points_per_scene} points cannot give {num_objects} objects "
            f"{cfg.min_object_points} points each",
            details={"points_per_scene": cfg.points_per_scene, "objects": num_objects},
        )
    return floor_points, [base + (1 if i < extra else 0) for i in range(num_objects)]


def generate_scene(cfg: SynthConfig, index: int) -> Scene:
    """Scene ``index`` of the stream defined by ``cfg.seed``."""
    rng = _scene_rng(cfg, index)
    scene_id = f"scene_{index:05d}"
    num_objects = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    floor_points, counts = _split_points(cfg, num_objects)
    objects = _place_objects(rng, cfg, num_objects, scene_id)
    ex, ey, _ = cfg.room_extent

    coords = [np.column_stack([
        rng.uniform(0.0, ex, size=floor_points),
        rng.uniform(0.0, ey, size=floor_points),
        np.zeros(floor_points),
    ])]
    labels = [np.full(floor_points, FLOOR)]
    instances = [np.full(floor_points, 0 if cfg.floor_instance else -1)]
    for iid, (obj, n) in enumerate(zip(objects, counts), start=1):
        local = _SAMPLERS[obj.kind](rng, n, obj.dims)
        coords.append(local + np.array([obj.center[0], obj.center[1], 0.0]))
        labels.append(np.full(n, obj.kind))
        instances.append(np.full(n, iid))

    coords = np.concatenate(coords)
    coords = coords + rng.normal(scale=cfg.coord_noise, size=coords.shape)
    labels = np.concatenate(labels)
    base = np.array([BASE_COLORS[c] for c in range(NUM_CLASSES)])
    colors = np.clip(base[labels] + rng.normal(scale=cfg.color_jitter, size=coords.shape), 0.0, 1.0)

    order = rng.permutation(coords.shape[0])
    scene = Scene(
        coords=coords[order].astype(np.float32).astype(np.float64),
        colors=colors[order].astype(np.float32).astype(np.float64),
        semantic_labels=labels[order],
        instance_ids=np.concatenate(instances)[order],
        scene_id=scene_id,
    )
    return remap_instances(scene)


def generate_split(cfg: SynthConfig) -> Tuple[List[Scene], List[Scene]]:
    """Train scenes use indices [0, num_train), test scenes the next num_test."""
    train = [generate_scene(cfg, i) for i in range(cfg.num_train)]
    test = [generate_scene(cfg, cfg.num_train + i) for i in range(cfg.num_test)]
    logger.info(f"Generated {len(train)} train and {len(test)} test scenes (seed {cfg.seed})")
    return train, test
