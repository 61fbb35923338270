"""On-disk formats: scene files, checkpoints, prediction text files and PLY export.

Binary formats are little-endian.

Scene file (``.pcis``)::

    magic "PCIS" | u32 version=1 | u32 N | u32 C | u32 M
    N records of f32 x, y, z, r, g, b | i32 semantic | i32 instance

Checkpoint (``.ckpt``)::

    magic "PCKP" | u32 version=1 | u32 L | L bytes UTF-8 JSON config echo
    u64 P | P x f64 parameters in ModelParams.named_arrays() order
    u8 has_optimizer | [u64 step | P x f64 m | P x f64 v]
"""

import colorsys
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from plyfile import PlyData, PlyElement

from ..models import (
    ModelConfig,
    LossConfig,
    TrainConfig,
    Scene,
    InstancePrediction,
    DataError,
    ConfigurationError,
)
from ..engine.network import ModelParams, init_params, check_params
from ..engine.optim import AdamState

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCENE_MAGIC = b"PCIS"
SCENE_VERSION = 1
SCENE_HEADER = struct.Struct("<4sIIII")
SCENE_SUFFIXES = (".pcis", ".csv")
CSV_HEADER = "x,y,z,r,g,b,semantic,instance"

RECORD_DTYPE = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("r", "<f4"), ("g", "<f4"), ("b", "<f4"),
    ("semantic", "<i4"), ("instance", "<i4"),
])

CHECKPOINT_MAGIC = b"PCKP"
CHECKPOINT_VERSION = 1


@dataclass
class SceneFile:
    scene: Scene
    num_classes: int
    path: Optional[str] = None


def _read_bytes(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}", path=str(path))


def _write_bytes(path: Path, payload: bytes) -> None:
    try:
        path.write_bytes(payload)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror or e}", path=str(path))


def write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror or e}", path=str(path))


def write_array(path: Path, array: np.ndarray, fmt: str) -> None:
    try:
        np.savetxt(path, array, fmt=fmt)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror or e}", path=str(path))


def encode_scene(scene: Scene, num_classes: int) -> bytes:
    records = np.empty(scene.num_points, dtype=RECORD_DTYPE)
    for i, name in enumerate("xyz"):
        records[name] = scene.coords[:, i]
    for i, name in enumerate("rgb"):
        records[name] = scene.colors[:, i]
    records["semantic"] = scene.semantic_labels
    records["instance"] = scene.instance_ids
    header = SCENE_HEADER.pack(SCENE_MAGIC, SCENE_VERSION, scene.num_points, num_classes, scene.num_instances)
    return header + records.tobytes()


def decode_scene(payload: bytes, scene_id: str, path: Optional[str] = None) -> SceneFile:
    if len(payload) < SCENE_HEADER.size:
        raise DataError("scene file is shorter than its header", path=path)
    magic, version, n, c, m = SCENE_HEADER.unpack_from(payload)
    if magic != SCENE_MAGIC:
        raise DataError(f"bad scene magic {magic!r}", path=path)
    if version != SCENE_VERSION:
        raise DataError(f"unsupported scene version {version}", path=path)
    expected = SCENE_HEADER.size + n * RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise DataError(
            f"scene file size {len(payload)} does not match header ({expected} bytes for {n} points)",
            path=path,
        )
    records = np.frombuffer(payload, dtype=RECORD_DTYPE, count=n, offset=SCENE_HEADER.size)
    scene = Scene(
        coords=np.stack([records[a] for a in "xyz"], axis=1).astype(np.float64),
        colors=np.stack([records[a] for a in "rgb"], axis=1).astype(np.float64),
        semantic_labels=records["semantic"].astype(np.int64),
        instance_ids=records["instance"].astype(np.int64),
        scene_id=scene_id,
    )
    if scene.num_instances != m:
        raise DataError(f"header declares {m} instances, records hold {scene.num_instances}", path=path)
    return SceneFile(scene, int(c), path)


def write_scene(path: PathLike, scene: Scene, num_classes: int) -> None:
    _write_bytes(Path(path), encode_scene(scene, num_classes))


def read_scene(path: PathLike, num_classes: Optional[int] = None) -> SceneFile:
    """Read a binary scene or its CSV twin; the scene id is the file stem."""
    path = Path(path)
    if path.suffix == ".csv":
        return read_scene_csv(path, num_classes)
    return decode_scene(_read_bytes(path), path.stem, str(path))


def read_scene_csv(path: PathLike, num_classes: Optional[int] = None) -> SceneFile:
    path = Path(path)
    try:
        with open(path, "r") as f:
            header = f.readline().strip()
            if header != CSV_HEADER:
                raise DataError(f"CSV header must be '{CSV_HEADER}', got '{header}'", path=str(path))
            table = np.loadtxt(f, delimiter=",", ndmin=2)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}", path=str(path))
    except ValueError as e:
        raise DataError(f"malformed CSV scene: {e}", path=str(path))
    if table.size == 0:
        table = np.zeros((0, 8))
    if table.shape[1] != 8:
        raise DataError(f"CSV rows need 8 columns, got {table.shape[1]}", path=str(path))
    # float32 on the way in keeps the CSV twin identical to the binary form
    scene = Scene(
        coords=table[:, 0:3].astype(np.float32).astype(np.float64),
        colors=table[:, 3:6].astype(np.float32).astype(np.float64),
        semantic_labels=table[:, 6].astype(np.int64),
        instance_ids=table[:, 7].astype(np.int64),
        scene_id=path.stem,
    )
    if num_classes is None:
        num_classes = int(scene.semantic_labels.max()) + 1 if scene.num_points else 1
    return SceneFile(scene, num_classes, str(path))


def write_scene_csv(path: PathLike, scene: Scene) -> None:
    rows = [CSV_HEADER]
    for p, c, s, i in zip(scene.coords, scene.colors, scene.semantic_labels, scene.instance_ids):
        values = [f"{float(np.float32(v)):.9g}" for v in (*p, *c)]
        rows.append(",".join(values + [str(int(s)), str(int(i))]))
    write_text(Path(path), "\n".join(rows) + "\n")


def collect_scene_files(paths: Iterable[PathLike]) -> List[Path]:
    """Expand directories into their scene files (sorted); files pass through."""
    found: List[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            found.extend(sorted(p for p in path.iterdir() if p.suffix in SCENE_SUFFIXES))
        elif path.exists():
            found.append(path)
        else:
            raise DataError(f"no such scene file or directory: {path}", path=str(path))
    return found


@dataclass
class Checkpoint:
    model_config: ModelConfig
    loss_config: LossConfig
    params: ModelParams
    seed: int = 0
    train_config: Optional[TrainConfig] = None
    optimizer: Optional[AdamState] = None

    def echo(self) -> dict:
        return {
            "format": "pointseg-checkpoint",
            "model": self.model_config.model_dump(mode="json"),
            "loss": self.loss_config.model_dump(mode="json"),
            "training": self.train_config.model_dump(mode="json") if self.train_config else None,
            "seed": self.seed,
        }


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    echo = json.dumps(ckpt.echo(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    flat = ckpt.params.flatten().astype("<f8")
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(echo)),
        echo,
        struct.pack("<Q", flat.size),
        flat.tobytes(),
    ]
    if ckpt.optimizer is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BQ", 1, ckpt.optimizer.step))
        parts.append(ckpt.optimizer.m.flatten().astype("<f8").tobytes())
        parts.append(ckpt.optimizer.v.flatten().astype("<f8").tobytes())
    return b"".join(parts)


def decode_checkpoint(payload: bytes, path: Optional[str] = None) -> Checkpoint:
    view = memoryview(payload)
    try:
        if bytes(view[:4]) != CHECKPOINT_MAGIC:
            raise DataError(f"bad checkpoint magic {bytes(view[:4])!r}", path=path)
        version, echo_len = struct.unpack_from("<II", payload, 4)
        if version != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}", path=path)
        offset = 12
        echo = json.loads(bytes(view[offset:offset + echo_len]).decode("utf-8"))
        offset += echo_len
        model_cfg = ModelConfig(**echo["model"])
        loss_cfg = LossConfig(**echo["loss"])
        train_cfg = TrainConfig(**echo["training"]) if echo.get("training") else None

        (count,) = struct.unpack_from("<Q", payload, offset)
        offset += 8
        template = init_params(model_cfg, 0)
        if count != template.size:
            raise DataError(
                f"checkpoint holds {count} parameters, configuration needs {template.size}", path=path
            )
        flat = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        params = template.unflatten(flat)
        check_params(params, model_cfg)

        (has_opt,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        optimizer = None
        if has_opt:
            (step,) = struct.unpack_from("<Q", payload, offset)
            offset += 8
            m = template.unflatten(np.frombuffer(payload, dtype="<f8", count=count, offset=offset))
            offset += 8 * count
            v = template.unflatten(np.frombuffer(payload, dtype="<f8", count=count, offset=offset))
            offset += 8 * count
            t = train_cfg or TrainConfig()
            optimizer = AdamState(int(step), m, v, t.lr, t.beta1, t.beta2, t.eps)
        if offset != len(payload):
            raise DataError(f"{len(payload) - offset} trailing bytes in checkpoint", path=path)
    except (struct.error, ValueError, KeyError, TypeError, UnicodeDecodeError) as e:
        raise DataError(f"corrupt checkpoint: {e}", path=path)
    except ConfigurationError as e:
        raise DataError(f"checkpoint configuration is invalid: {e.message}", details=e.details, path=path)
    return Checkpoint(model_cfg, loss_cfg, params, int(echo.get("seed", 0)), train_cfg, optimizer)


def write_checkpoint(path: PathLike, ckpt: Checkpoint) -> None:
    _write_bytes(Path(path), encode_checkpoint(ckpt))
    logger.debug(f"Wrote checkpoint {path} ({ckpt.params.size} parameters)")


def read_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    return decode_checkpoint(_read_bytes(path), str(path))


def format_instances(predictions: Sequence[InstancePrediction]) -> str:
    lines = []
    for pred in predictions:
        indices = " ".join(str(int(i)) for i in pred.point_indices)
        lines.append(f"{pred.class_label} {pred.confidence:.17g} {indices}".rstrip())
    return "\n".join(lines) + ("\n" if lines else "")


def read_instances(path: PathLike) -> List[InstancePrediction]:
    """Parse ``class confidence idx idx ...`` lines; the line number is the cluster id."""
    path = Path(path)
    predictions = []
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror or e}", path=str(path))
    for number, line in enumerate(text.splitlines()):
        fields = line.split()
        if not fields:
            continue
        try:
            predictions.append(InstancePrediction(
                point_indices=np.array([int(v) for v in fields[2:]], dtype=np.int64),
                class_label=int(fields[0]),
                confidence=float(fields[1]),
                cluster_id=number,
            ))
        except (ValueError, IndexError) as e:
            raise DataError(f"malformed instance line {number + 1}: {e}", path=str(path))
    return predictions


def read_labels(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        return np.loadtxt(path, dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read labels from {path}: {e}", path=str(path))


PLY_VERTEX_DTYPE = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
    ("instance", "<i4"),
])
NOISE_COLOR = (128, 128, 128)


def instance_palette(count: int) -> np.ndarray:
    """Distinct 8-bit colors, one per cluster id (golden-ratio hue steps)."""
    hues = (np.arange(count) * 0.618033988749895) % 1.0
    rgb = np.array([colorsys.hsv_to_rgb(h, 0.75, 0.95) for h in hues]).reshape(-1, 3)
    return np.round(rgb * 255.0).astype(np.uint8)


def ply_vertices(coords: np.ndarray, assignments: np.ndarray) -> np.ndarray:
    """Vertex records colored by instance; noise points are gray."""
    assignments = np.asarray(assignments, dtype=np.int64)
    count = int(assignments.max()) + 1 if assignments.size and assignments.max() >= 0 else 0
    colors = np.vstack([instance_palette(count), np.array([NOISE_COLOR], dtype=np.uint8)])
    rgb = colors[np.where(assignments >= 0, assignments, count)]
    vertices = np.empty(coords.shape[0], dtype=PLY_VERTEX_DTYPE)
    for i, name in enumerate("xyz"):
        vertices[name] = coords[:, i]
    for i, name in enumerate(("red", "green", "blue")):
        vertices[name] = rgb[:, i]
    vertices["instance"] = assignments
    return vertices


def write_ply(path: PathLike, coords: np.ndarray, assignments: np.ndarray) -> None:
    """ASCII PLY export of one scene's clustering."""
    path = Path(path)
    element = PlyElement.describe(ply_vertices(coords, assignments), "vertex")
    try:
        PlyData([element], text=True).write(str(path))
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror or e}", path=str(path))
