"""End-to-end wiring: graphs, inference, evaluation and the ablation grid."""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..models import (
    ModelConfig,
    LossConfig,
    ClusterConfig,
    TrainConfig,
    EvalConfig,
    Scene,
    InstancePrediction,
)
from ..engine.cluster import ClusterResult, mean_shift, clusters_to_predictions
from ..engine.evaluation import EvalResult, evaluate
from ..engine.network import ModelParams, model_forward
from ..engine.optim import TrainReport, train
from ..engine.spatial import KnnGraph, build_knn_graph
from .workers import SceneWorkerPool

logger = logging.getLogger(__name__)


def build_graphs(scenes: Sequence[Scene], k: int, pool: Optional[SceneWorkerPool] = None) -> List[KnnGraph]:
    """One spatial KNN graph per scene."""
    pool = pool or SceneWorkerPool()
    return pool.map(lambda s: build_knn_graph(s.coords, k), scenes, label="knn graph")


@dataclass
class InferenceResult:
    scene_id: str
    semantic: np.ndarray
    logits: np.ndarray
    initial_embeddings: np.ndarray
    refined_embeddings: np.ndarray
    clusters: ClusterResult
    predictions: List[InstancePrediction]


def infer_scene(scene: Scene, graph: KnnGraph, params: ModelParams, model_cfg: ModelConfig,
                cluster_cfg: ClusterConfig) -> InferenceResult:
    """Forward pass, mean-shift on the refined embeddings, predictions per cluster."""
    logits, initial, refined, _ = model_forward(scene, graph, params, model_cfg.aggregation)
    clusters = mean_shift(refined, cluster_cfg)
    predictions = clusters_to_predictions(clusters, logits)
    return InferenceResult(
        scene.scene_id, np.argmax(logits, axis=1), logits, initial, refined, clusters, predictions
    )


def infer_scenes(scenes: Sequence[Scene], params: ModelParams, model_cfg: ModelConfig,
                 cluster_cfg: ClusterConfig, pool: Optional[SceneWorkerPool] = None,
                 graphs: Optional[Sequence[KnnGraph]] = None) -> List[InferenceResult]:
    pool = pool or SceneWorkerPool()
    graphs = graphs if graphs is not None else build_graphs(scenes, model_cfg.knn_k, pool)
    return pool.map(
        lambda pair: infer_scene(pair[0], pair[1], params, model_cfg, cluster_cfg),
        list(zip(scenes, graphs)),
        label="inference",
    )


def evaluate_results(results: Sequence[InferenceResult], scenes: Sequence[Scene], num_classes: int,
                     eval_cfg: EvalConfig) -> EvalResult:
    return evaluate(
        [r.predictions for r in results],
        scenes,
        [r.semantic for r in results],
        num_classes,
        thresholds=eval_cfg.iou_thresholds,
        ap_sweep=eval_cfg.ap_sweep,
    )


ABLATION_HEADER = ("variant", "loss", "gcn_layers", "ap50", "ap25", "ap_sweep", "miou", "final_total_loss")

DEFAULT_VARIANTS: Tuple[Tuple[str, int], ...] = tuple(
    (loss, layers) for loss in ("vanilla", "structure") for layers in (0, 1, 2)
)


@dataclass
class AblationRow:
    variant: str
    loss: str
    gcn_layers: int
    ap50: float
    ap25: float
    ap_sweep: float
    miou: float
    final_total_loss: float
    report: TrainReport

    def cells(self) -> List[str]:
        return [
            self.variant, self.loss, str(self.gcn_layers),
            f"{self.ap50:.6f}", f"{self.ap25:.6f}", f"{self.ap_sweep:.6f}", f"{self.miou:.6f}",
            f"{self.final_total_loss:.17g}",
        ]


def run_ablation(train_scenes: Sequence[Scene], test_scenes: Sequence[Scene], model_cfg: ModelConfig,
                 loss_cfg: LossConfig, train_cfg: TrainConfig, cluster_cfg: ClusterConfig,
                 variants: Iterable[Tuple[str, int]] = DEFAULT_VARIANTS,
                 pool: Optional[SceneWorkerPool] = None) -> List[AblationRow]:
    """Train and evaluate each (loss variant, GCN depth) pair with the same seed.

    ``vanilla`` uses uniform point weights, ``structure`` the sigmoid-distance weights.
    """
    pool = pool or SceneWorkerPool(train_cfg.threads)
    eval_cfg = EvalConfig(iou_thresholds=[0.5, 0.25], ap_sweep=True)
    train_graphs = build_graphs(train_scenes, model_cfg.knn_k, pool)
    test_graphs = build_graphs(test_scenes, model_cfg.knn_k, pool)
    rows = []
    for loss_name, layers in variants:
        weighting = "uniform" if loss_name == "vanilla" else "sigmoid_distance"
        m_cfg = model_cfg.model_copy(update={"gcn_layers": layers})
        l_cfg = loss_cfg.model_copy(update={"structure_weighting": weighting})
        name = f"{loss_name}Loss+gcn x{layers}"
        logger.info(f"Ablation variant {name}")
        params, report, _ = train(train_scenes, m_cfg, l_cfg, train_cfg, graphs=train_graphs)
        results = infer_scenes(test_scenes, params, m_cfg, cluster_cfg, pool, graphs=test_graphs)
        ev = evaluate_results(results, test_scenes, m_cfg.num_classes, eval_cfg)
        final = report.epochs[-1].total if report.epochs else float("nan")
        rows.append(AblationRow(
            name, loss_name, layers, ev.mean_ap[0.5], ev.mean_ap[0.25], ev.ap_sweep, ev.miou, final, report
        ))
    return rows


def ablation_table(rows: Sequence[AblationRow]) -> str:
    lines = ["\t".join(ABLATION_HEADER)]
    lines.extend("\t".join(row.cells()) for row in rows)
    return "\n".join(lines) + "\n"
