"""Runtime wiring: worker pool and the end-to-end pipeline."""

from .workers import SceneWorkerPool
from .pipeline import (
    InferenceResult,
    AblationRow,
    build_graphs,
    infer_scene,
    infer_scenes,
    evaluate_results,
    run_ablation,
    ablation_table,
)

__all__ = [
    "SceneWorkerPool", "InferenceResult", "AblationRow", "build_graphs", "infer_scene",
    "infer_scenes", "evaluate_results", "run_ablation", "ablation_table",
]
