"""Command implementations behind the ``main.py`` subcommands.

Every ``cmd_*`` function takes the parsed argparse namespace and a ``ConfigManager``,
raises ``PointSegError`` on failure and returns 0 on success. Exit-code mapping and
error reporting live in ``run``.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..models import (
    PointSegError,
    ConfigurationError,
    DataError,
    NumericalError,
    Scene,
    validate_scene,
)
from ..utils import ConfigManager, LoggingManager
from ..core import SceneWorkerPool, build_graphs, infer_scenes, run_ablation, ablation_table
from ..core.pipeline import DEFAULT_VARIANTS
from ..engine.evaluation import evaluate
from ..engine.gradcheck import run_gradcheck
from ..engine.optim import train
from ..engine.synth import NUM_CLASSES, generate_split
from .formats import (
    Checkpoint,
    SceneFile,
    collect_scene_files,
    format_instances,
    read_checkpoint,
    read_instances,
    read_labels,
    read_scene,
    write_checkpoint,
    write_ply,
    write_scene,
    write_array,
    write_text,
)

logger = logging.getLogger(__name__)


def _make_dir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create directory {path}: {e.strerror or e}", path=str(path))


def _warn_threads(threads: int) -> None:
    if threads > 1:
        logger.warning(
            f"Running scene jobs on {threads} threads; results keep input order but "
            "wall-clock timings in reports will differ between runs"
        )


def load_scenes(paths: Sequence[str], num_classes: Optional[int] = None,
                knn_k: Optional[int] = None) -> List[SceneFile]:
    """Read and validate scene files; the first violation aborts naming file and field.

    With ``knn_k`` set, a scene too small for a KNN graph of that size is rejected too.
    """
    loaded = []
    for path in collect_scene_files(paths):
        item = read_scene(path, num_classes)
        violations = validate_scene(item.scene, num_classes if num_classes is not None else item.num_classes)
        if violations:
            raise DataError(
                f"invalid scene {path}: {violations[0]}",
                details={"violations": [str(v) for v in violations[:10]]},
                path=str(path),
            )
        if knn_k is not None and item.scene.num_points <= knn_k:
            raise DataError(
                f"invalid scene {path}: {item.scene.num_points} points, a KNN graph with k={knn_k} needs more",
                details={"num_points": item.scene.num_points, "knn_k": knn_k},
                path=str(path),
            )
        loaded.append(item)
    return loaded


def _training_dir(data: str) -> str:
    """A synth output root trains on its ``train`` split."""
    root = Path(data)
    if root.is_dir() and (root / "train").is_dir() and not any(
        p.suffix in (".pcis", ".csv") for p in root.iterdir()
    ):
        return str(root / "train")
    return data


def cmd_synth(args: argparse.Namespace, config: ConfigManager) -> int:
    config.override(
        "synth",
        seed=args.seed,
        num_train=args.num_train,
        num_test=args.num_test,
        points_per_scene=args.points,
    )
    cfg = config.synth_config
    out = Path(args.out)
    train_scenes, test_scenes = generate_split(cfg)
    for split, scenes in (("train", train_scenes), ("test", test_scenes)):
        target = out / split
        _make_dir(target)
        for scene in scenes:
            write_scene(target / f"{scene.scene_id}.pcis", scene, NUM_CLASSES)
    print(f"train: {len(train_scenes)} scenes")
    print(f"test: {len(test_scenes)} scenes")
    print(f"total: {len(train_scenes) + len(test_scenes)} scene files written to {out}")
    return 0


def cmd_train(args: argparse.Namespace, config: ConfigManager) -> int:
    config.override("training", epochs=args.epochs, seed=args.seed, threads=args.threads,
                    pretrain_epochs=args.pretrain_epochs)
    config.override("model", gcn_layers=args.gcn_layers, aggregation=args.aggregation)
    model_cfg, loss_cfg, train_cfg = config.model_config, config.loss_config, config.train_config

    files = load_scenes([_training_dir(args.data)], model_cfg.num_classes, model_cfg.knn_k)
    if not files:
        raise DataError(f"no scene files found in {args.data}", path=args.data)
    scenes = [f.scene for f in files]
    _warn_threads(train_cfg.threads)
    pool = SceneWorkerPool(train_cfg.threads)

    logger.info(f"Training on {len(scenes)} scenes for {train_cfg.epochs} epochs")
    graphs = build_graphs(scenes, model_cfg.knn_k, pool)
    params, report, state = train(scenes, model_cfg, loss_cfg, train_cfg, graphs=graphs)

    checkpoint = Path(args.checkpoint)
    if not checkpoint.parent.exists():
        _make_dir(checkpoint.parent)
    write_checkpoint(checkpoint, Checkpoint(model_cfg, loss_cfg, params, train_cfg.seed, train_cfg, state))
    write_text(Path(f"{checkpoint}.losses.tsv"), report.table())
    if report.epochs:
        first, last = report.epochs[0], report.epochs[-1]
        print(f"epochs: {len(report.epochs)} total loss {first.total:.6f} -> {last.total:.6f}")
    else:
        print("epochs: 0 (checkpoint holds the initialization)")
    print(f"checkpoint: {checkpoint}")
    return 0


def _check_classes(files: Sequence[SceneFile], ckpt: Checkpoint, ckpt_path: str) -> None:
    mismatched = [f for f in files if f.num_classes != ckpt.model_config.num_classes]
    if mismatched:
        first = mismatched[0]
        raise ConfigurationError(
            f"scene {first.path} declares {first.num_classes} classes, "
            f"checkpoint model has {ckpt.model_config.num_classes}",
            details={
                "checkpoint_config": ckpt.model_config.model_dump(mode="json"),
                "scene_config": {"num_classes": first.num_classes, "path": first.path},
            },
            path=ckpt_path,
        )


def cmd_infer(args: argparse.Namespace, config: ConfigManager) -> int:
    config.override("cluster", bandwidth=args.bandwidth)
    config.override("training", threads=args.threads)
    cluster_cfg, threads = config.cluster_config, config.train_config.threads
    ckpt = read_checkpoint(args.checkpoint)

    files = load_scenes(args.scenes, knn_k=ckpt.model_config.knn_k)
    if not files:
        logger.info("No scene files given; nothing to do")
        return 0
    _check_classes(files, ckpt, args.checkpoint)
    _warn_threads(threads)

    out = Path(args.out)
    _make_dir(out)
    scenes = [f.scene for f in files]
    results = infer_scenes(scenes, ckpt.params, ckpt.model_config, cluster_cfg, SceneWorkerPool(threads))
    for scene, result in zip(scenes, results):
        stem = out / scene.scene_id
        write_array(Path(f"{stem}.semantic.txt"), result.semantic, "%d")
        write_array(Path(f"{stem}.embeddings.txt"), result.refined_embeddings, "%.17g")
        write_array(Path(f"{stem}.clusters.txt"), result.clusters.assignments, "%d")
        write_text(Path(f"{stem}.instances.txt"), format_instances(result.predictions))
        if args.export_ply:
            write_ply(Path(f"{stem}.instances.ply"), scene.coords, result.clusters.assignments)
        print(f"{scene.scene_id}: {len(result.predictions)} instances")
    return 0


def _prediction_ids(directory: Path) -> List[str]:
    suffix = ".instances.txt"
    return sorted(p.name[: -len(suffix)] for p in directory.glob(f"*{suffix}"))


def cmd_eval(args: argparse.Namespace, config: ConfigManager) -> int:
    if args.thresholds:
        config.override("evaluation", iou_thresholds=args.thresholds)
    eval_cfg = config.eval_config
    pred_dir = Path(args.predictions)
    if not pred_dir.is_dir():
        raise DataError(f"predictions directory not found: {pred_dir}", path=str(pred_dir))

    files = load_scenes([args.ground_truth])
    gt_ids = [f.scene.scene_id for f in files]
    pred_ids = _prediction_ids(pred_dir)
    if sorted(gt_ids) != pred_ids:
        missing = sorted(set(gt_ids) - set(pred_ids))
        extra = sorted(set(pred_ids) - set(gt_ids))
        raise DataError(
            "scene ids differ between predictions and ground truth",
            details={"missing_predictions": missing, "unknown_predictions": extra},
            path=str(pred_dir),
        )

    num_classes = max((f.num_classes for f in files), default=config.model_config.num_classes)
    scenes: List[Scene] = [f.scene for f in files]
    predictions, labels = [], []
    for scene in scenes:
        preds = read_instances(pred_dir / f"{scene.scene_id}.instances.txt")
        sem_path = pred_dir / f"{scene.scene_id}.semantic.txt"
        sem = read_labels(sem_path)
        if sem.shape[0] != scene.num_points:
            raise DataError(
                f"{sem.shape[0]} semantic labels for {scene.num_points} points", path=str(sem_path)
            )
        predictions.append(preds)
        labels.append(sem)

    result = evaluate(predictions, scenes, labels, num_classes,
                      thresholds=eval_cfg.iou_thresholds, ap_sweep=eval_cfg.ap_sweep)
    table = result.table()
    sys.stdout.write(table)
    write_text(pred_dir / "eval.tsv", table)
    return 0


def cmd_gradcheck(args: argparse.Namespace, config: ConfigManager) -> int:
    model_cfg, loss_cfg = config.model_config, config.loss_config
    failed: List[Tuple[int, str, float]] = []
    for seed in range(args.seed, args.seed + args.repeat):
        report = run_gradcheck(
            seed=seed, num_points=args.points, num_instances=args.instances,
            model_cfg=model_cfg, loss_cfg=loss_cfg, tolerance=args.tolerance,
            corrupt_group=args.corrupt_group,
        )
        print(f"# seed {seed}")
        for line in report.lines():
            print(line)
        failed.extend((seed, name, err) for name, err in report.failures.items())
    if failed:
        raise NumericalError(
            "gradient check failed for " + ", ".join(sorted({name for _, name, _ in failed})),
            details={f"seed {s}: {name}": err for s, name, err in failed},
        )
    print("gradcheck: all groups pass")
    return 0


def cmd_ablate(args: argparse.Namespace, config: ConfigManager) -> int:
    config.override("training", epochs=args.epochs, seed=args.seed, threads=args.threads)
    model_cfg, loss_cfg = config.model_config, config.loss_config
    train_cfg, cluster_cfg = config.train_config, config.cluster_config

    if args.data:
        root = Path(args.data)
        train_scenes = [f.scene for f in load_scenes([root / "train"], model_cfg.num_classes, model_cfg.knn_k)]
        test_scenes = [f.scene for f in load_scenes([root / "test"], model_cfg.num_classes, model_cfg.knn_k)]
    else:
        train_scenes, test_scenes = generate_split(config.synth_config)
    if not train_scenes or not test_scenes:
        raise DataError("ablation needs non-empty train and test splits", path=args.data)

    variants = list(DEFAULT_VARIANTS)
    if args.include_gcn3:
        variants += [("vanilla", 3), ("structure", 3)]
    _warn_threads(train_cfg.threads)
    rows = run_ablation(train_scenes, test_scenes, model_cfg, loss_cfg, train_cfg, cluster_cfg,
                        variants, SceneWorkerPool(train_cfg.threads))
    table = ablation_table(rows)
    sys.stdout.write(table)
    if args.out:
        write_text(Path(args.out), table)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointseg", description="Point cloud instance segmentation engine")
    parser.add_argument("--config", type=str, default="./config.yaml", help="Path to config file")
    parser.add_argument("--log-level", type=str, help="Log level (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate synthetic train/test scenes")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-train", type=int)
    p.add_argument("--num-test", type=int)
    p.add_argument("--points", type=int, help="Points per scene")

    p = sub.add_parser("train", help="Train a model on a directory of scene files")
    p.add_argument("--data", required=True, help="Scene directory (a synth root uses its train split)")
    p.add_argument("--checkpoint", required=True, help="Checkpoint output path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--pretrain-epochs", type=int)
    p.add_argument("--gcn-layers", type=int)
    p.add_argument("--aggregation", choices=["attention", "mean"])
    p.add_argument("--threads", type=int)

    p = sub.add_parser("infer", help="Segment scenes with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="Prediction directory")
    p.add_argument("--bandwidth", type=float, help="Mean-shift bandwidth (overrides config)")
    p.add_argument("--export-ply", action="store_true", help="Also write points colored by instance")
    p.add_argument("--threads", type=int)
    p.add_argument("scenes", nargs="*", help="Scene files or directories")

    p = sub.add_parser("eval", help="Score predictions against ground-truth scenes")
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--thresholds", type=float, nargs="+", help="IoU thresholds (overrides config)")

    p = sub.add_parser("gradcheck", help="Finite-difference check of all analytic gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--instances", type=int, default=3)
    p.add_argument("--repeat", type=int, default=1, help="Number of consecutive seeds")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt-group", help=argparse.SUPPRESS)

    p = sub.add_parser("ablate", help="Loss variant x GCN depth ablation table")
    p.add_argument("--data", help="Directory with train/ and test/ splits (default: generate from synth config)")
    p.add_argument("--out", help="Write the table here as well")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--include-gcn3", action="store_true")
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging_manager = None
    try:
        config = ConfigManager(args.config)
        if args.log_level:
            config.override("logging", level=args.log_level.lower())
        logging_manager = LoggingManager(config.logging_config)
        return COMMANDS[args.command](args, config)
    except PointSegError as e:
        if logging_manager is not None:
            logging_manager.log_error(e, args.command)
        where = f" ({e.path})" if e.path else ""
        print(f"error: {e.message}{where}", file=sys.stderr)
        for key, value in e.details.items():
            print(f"  {key}: {value}", file=sys.stderr)
        return e.code.value
