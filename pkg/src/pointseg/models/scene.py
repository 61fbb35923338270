"""Scene and prediction data models."""

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

NO_INSTANCE = -1


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Scene:
    """Labeled point cloud: the unit of training and inference.

    Arrays are copied and made read-only on construction.
    """

    coords: np.ndarray
    colors: np.ndarray
    semantic_labels: np.ndarray
    instance_ids: np.ndarray
    scene_id: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(self.coords, np.float64))
        object.__setattr__(self, "colors", _frozen(self.colors, np.float64))
        object.__setattr__(self, "semantic_labels", _frozen(self.semantic_labels, np.int64))
        object.__setattr__(self, "instance_ids", _frozen(self.instance_ids, np.int64))

    @property
    def num_points(self) -> int:
        return int(self.coords.shape[0])

    @property
    def num_instances(self) -> int:
        """Number of distinct instance ids, ignoring the no-instance sentinel."""
        labeled = self.instance_ids[self.instance_ids >= 0]
        return int(np.unique(labeled).size)

    def instance_members(self) -> List[np.ndarray]:
        """Point indices per instance id 0..M-1 (ids assumed consecutive)."""
        ids = self.instance_ids
        if not np.any(ids >= 0):
            return []
        order = np.argsort(ids, kind="stable")
        sorted_ids = ids[order]
        start = np.searchsorted(sorted_ids, 0)
        bounds = np.flatnonzero(np.diff(sorted_ids[start:])) + 1
        return [np.sort(chunk) for chunk in np.split(order[start:], bounds)]

    def same_values(self, other: "Scene") -> bool:
        """Bitwise equality of every field."""
        return (
            self.scene_id == other.scene_id
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.colors, other.colors)
            and np.array_equal(self.semantic_labels, other.semantic_labels)
            and np.array_equal(self.instance_ids, other.instance_ids)
        )


@dataclass(frozen=True)
class Violation:
    """A single broken scene invariant."""

    field: str
    index: Optional[int]
    reason: str

    def __str__(self) -> str:
        where = f"[{self.index}]" if self.index is not None else ""
        return f"{self.field}{where}: {self.reason}"


@dataclass(frozen=True, eq=False)
class InstancePrediction:
    """One predicted instance: sorted member indices, class and confidence."""

    point_indices: np.ndarray
    class_label: int
    confidence: float
    cluster_id: int = 0

    def __post_init__(self):
        indices = np.unique(np.asarray(self.point_indices, dtype=np.int64))
        indices.setflags(write=False)
        object.__setattr__(self, "point_indices", indices)


_CHANNELS = ("r", "g", "b")


def validate_scene(scene: Scene, num_classes: Optional[int] = None) -> List[Violation]:
    """Check every Scene invariant; never raises.

    Returns an empty list when the scene is well formed. ``num_classes`` bounds the
    semantic labels when given.
    """
    violations: List[Violation] = []
    n = scene.coords.shape[0] if scene.coords.ndim == 2 else -1

    if scene.coords.ndim != 2 or scene.coords.shape[1] != 3:
        violations.append(Violation("coords", None, f"expected N x 3, got shape {scene.coords.shape}"))
        return violations
    for name, array, shape in (
        ("colors", scene.colors, (n, 3)),
        ("semantic_labels", scene.semantic_labels, (n,)),
        ("instance_ids", scene.instance_ids, (n,)),
    ):
        if array.shape != shape:
            violations.append(Violation(name, None, f"expected shape {shape}, got {array.shape}"))
    if violations:
        return violations

    for i in np.flatnonzero(~np.all(np.isfinite(scene.coords), axis=1)):
        violations.append(Violation("coords", int(i), "non-finite coordinate"))

    bad_colors = ~np.isfinite(scene.colors) | (scene.colors < 0.0) | (scene.colors > 1.0)
    for i, c in zip(*np.nonzero(bad_colors)):
        value = scene.colors[i, c]
        violations.append(
            Violation("colors", int(i), f"channel {_CHANNELS[c]}={value:g} outside [0, 1]")
        )

    ids = scene.instance_ids
    for i in np.flatnonzero(ids < NO_INSTANCE):
        violations.append(Violation("instance_ids", int(i), f"invalid instance id {int(ids[i])}"))
    present = np.unique(ids[ids >= 0])
    if present.size and not np.array_equal(present, np.arange(present.size)):
        missing = sorted(set(range(int(present.max()) + 1)) - set(present.tolist()))
        violations.append(
            Violation("instance_ids", None, f"non-consecutive instance ids (missing {missing})")
        )

    labels = scene.semantic_labels
    upper = num_classes if num_classes is not None else np.iinfo(np.int64).max
    for i in np.flatnonzero((labels < 0) | (labels >= upper)):
        reason = f"semantic label {int(labels[i])} out of range"
        if ids[i] >= 0:
            reason += " on an instance point"
        violations.append(Violation("semantic_labels", int(i), reason))
    return violations


def remap_instances(scene: Scene) -> Scene:
    """Relabel instance ids to 0..M-1 in ascending id order; -1 is kept."""
    ids = scene.instance_ids
    mask = ids >= 0
    if not np.any(mask):
        return scene
    remapped = np.full_like(ids, NO_INSTANCE)
    _, inverse = np.unique(ids[mask], return_inverse=True)
    remapped[mask] = inverse
    return replace(scene, instance_ids=remapped)
