"""Central finite-difference checks of every analytic gradient in the network and losses.

The loss is piecewise smooth: ReLU units in the backbone and the attention scorer, and
the hinges of the structure-aware loss. A central difference whose two evaluation points
land on a different piece than the base point measures the kink, not the gradient, so
every step is compared against the base activation pattern and redrawn when it crosses.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..models import ModelConfig, LossConfig, NumericalError, Scene
from .loss import compute_instance_stats, cross_entropy, structure_aware_loss, total_training_loss
from .network import ModelParams, init_params, model_backward, model_forward, parameter_group
from .spatial import KnnGraph, build_knn_graph

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
DEFAULT_EPSILON = 1e-5
MAX_DIRECTION_DRAWS = 20
MAX_SETUP_DRAWS = 5

Evaluation = Tuple[float, np.ndarray]


@dataclass
class GradcheckReport:
    groups: Dict[str, float] = field(default_factory=dict)
    paths: Dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE
    redraws: int = 0

    @property
    def failures(self) -> Dict[str, float]:
        errors = {**self.groups, **self.paths}
        return {name: err for name, err in errors.items() if not err < self.tolerance}

    @property
    def passed(self) -> bool:
        return not self.failures

    def lines(self):
        for name, err in list(self.groups.items()) + list(self.paths.items()):
            status = "ok" if err < self.tolerance else "FAIL"
            yield f"{name}\t{err:.3e}\t{status}"


class KinkCrossing(NumericalError):
    """Every drawn direction moved the evaluation points onto another smooth piece."""


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def random_scene(rng: np.random.Generator, num_points: int, num_instances: int, num_classes: int) -> Scene:
    """Small scene with every instance non-empty and one class per instance."""
    ids = np.arange(num_points) % num_instances
    rng.shuffle(ids)
    classes = rng.integers(0, num_classes, size=num_instances)
    return Scene(
        coords=rng.uniform(0.0, 2.0, size=(num_points, 3)),
        colors=rng.uniform(0.0, 1.0, size=(num_points, 3)),
        semantic_labels=classes[ids],
        instance_ids=ids,
        scene_id="gradcheck",
    )


def hinge_pattern(scene: Scene, embeddings: np.ndarray, cfg: LossConfig) -> np.ndarray:
    """Which intra hinges (member distance above alpha) and inter hinges (means closer than beta) are active."""
    stats = compute_instance_stats(scene, embeddings, cfg.structure_weighting)
    masks = [inst.embedding_distances > cfg.alpha for inst in stats.instances]
    if stats.num_instances > 1:
        means = np.stack([inst.embedding_mean for inst in stats.instances])
        dist = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
        masks.append((dist < cfg.beta)[np.triu_indices(stats.num_instances, 1)])
    return np.concatenate(masks) if masks else np.zeros(0, dtype=bool)


def activation_pattern(scene: Scene, graph: KnnGraph, params: ModelParams,
                       model_cfg: ModelConfig, loss_cfg: LossConfig) -> Evaluation:
    """Training loss together with every ReLU mask and hinge active set it went through."""
    logits, initial, refined, trace = model_forward(scene, graph, params, model_cfg.aggregation)
    value = total_training_loss(scene, logits, initial, refined, loss_cfg).value
    masks: List[np.ndarray] = [z > 0.0 for z in trace.backbone.pre_activations]
    masks += [t.f_pre > 0.0 for t in trace.gcn]
    masks += [hinge_pattern(scene, initial, loss_cfg), hinge_pattern(scene, refined, loss_cfg)]
    return value, np.concatenate([m.ravel() for m in masks])


def _unit(rng: np.random.Generator, shape) -> np.ndarray:
    v = rng.normal(size=shape)
    return v / np.linalg.norm(v)


def smooth_difference(evaluate: Callable[[np.ndarray], Evaluation], x: np.ndarray,
                      draw: Callable[[], np.ndarray], eps: float) -> Tuple[np.ndarray, float, int]:
    """Central difference along a drawn direction whose evaluation points keep the base pattern.

    Returns (direction, numeric derivative, number of rejected directions).
    """
    _, base = evaluate(x)
    for attempt in range(MAX_DIRECTION_DRAWS):
        direction = draw()
        plus, plus_pattern = evaluate(x + eps * direction)
        minus, minus_pattern = evaluate(x - eps * direction)
        if np.array_equal(plus_pattern, base) and np.array_equal(minus_pattern, base):
            return direction, (plus - minus) / (2.0 * eps), attempt
    raise KinkCrossing(f"no kink-free direction in {MAX_DIRECTION_DRAWS} draws")


def _setup(rng: np.random.Generator, seed: int, num_points: int, num_instances: int, model_cfg: ModelConfig):
    scene = random_scene(rng, num_points, num_instances, model_cfg.num_classes)
    graph = build_knn_graph(scene.coords, model_cfg.knn_k)
    params = init_params(model_cfg, seed)
    # spread embeddings over both hinges and make attention non-uniform
    params.embedding_head.weight *= 4.0
    for layer in params.gcn:
        layer.f_out.weight[...] = rng.normal(scale=0.5, size=layer.f_out.weight.shape)
        layer.f_out.bias[...] = rng.normal(scale=0.1, size=layer.f_out.bias.shape)
    return scene, graph, params


def _check(rng: np.random.Generator, scene: Scene, graph: KnnGraph, params: ModelParams,
           model_cfg: ModelConfig, loss_cfg: LossConfig, eps: float, tolerance: float,
           corrupt_group: Optional[str]) -> GradcheckReport:
    logits, initial, refined, trace = model_forward(scene, graph, params, model_cfg.aggregation)
    loss = total_training_loss(scene, logits, initial, refined, loss_cfg)
    grads, _ = model_backward(trace, loss.grad_logits, loss.grad_initial, loss.grad_refined, graph, params)

    def evaluate(x: np.ndarray) -> Evaluation:
        return activation_pattern(scene, graph, params.unflatten(x), model_cfg, loss_cfg)

    report = GradcheckReport(tolerance=tolerance)
    flat = params.flatten()
    offset = 0
    for (name, array), (_, grad) in zip(params.named_arrays(), grads.named_arrays()):
        group = parameter_group(name)
        start, stop = offset, offset + array.size
        offset = stop

        def draw(start: int = start, stop: int = stop) -> np.ndarray:
            direction = np.zeros_like(flat)
            direction[start:stop] = _unit(rng, stop - start)
            return direction

        direction, numeric, rejected = smooth_difference(evaluate, flat, draw, eps)
        report.redraws += rejected
        analytic = float(np.dot(grad.ravel(), direction[start:stop]))
        if group == corrupt_group:
            analytic *= 1.5
        err = relative_error(analytic, numeric)
        report.groups[group] = max(report.groups.get(group, 0.0), err)
        logger.debug(f"{name}: analytic={analytic:.6e} numeric={numeric:.6e} rel={err:.2e}")

    # loss-to-output paths in isolation
    def structure_at(e: np.ndarray) -> Evaluation:
        e = e.reshape(refined.shape)
        return structure_aware_loss(scene, e, loss_cfg)[0], hinge_pattern(scene, e, loss_cfg)

    _, g_emb = structure_aware_loss(scene, refined, loss_cfg)
    v, numeric, rejected = smooth_difference(structure_at, refined.ravel(), lambda: _unit(rng, refined.size), eps)
    report.redraws += rejected
    report.paths["structure_loss->embeddings"] = relative_error(float(np.dot(g_emb.ravel(), v)), numeric)

    def cross_entropy_at(z: np.ndarray) -> Evaluation:
        return cross_entropy(z.reshape(logits.shape), scene.semantic_labels)[0], np.zeros(0, dtype=bool)

    _, g_logits = cross_entropy(logits, scene.semantic_labels)
    v, numeric, _ = smooth_difference(cross_entropy_at, logits.ravel(), lambda: _unit(rng, logits.size), eps)
    report.paths["cross_entropy->logits"] = relative_error(float(np.dot(g_logits.ravel(), v)), numeric)
    return report


def run_gradcheck(seed: int = 0, num_points: int = 60, num_instances: int = 3,
                  model_cfg: Optional[ModelConfig] = None, loss_cfg: Optional[LossConfig] = None,
                  eps: float = DEFAULT_EPSILON, tolerance: float = DEFAULT_TOLERANCE,
                  corrupt_group: Optional[str] = None) -> GradcheckReport:
    """Compare analytic directional derivatives with central differences.

    Every parameter array gets its own random unit direction; errors are reported as the
    maximum over the arrays of each group. Directions whose evaluation points cross a ReLU or hinge
    kink are redrawn, and a point sitting so close to a kink that no direction avoids it
    gets a fresh scene and parameters. ``corrupt_group`` scales that group's analytic
    gradient by 1.5 so the detector can be exercised.
    """
    model_cfg = model_cfg or ModelConfig()
    loss_cfg = loss_cfg or LossConfig()
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_SETUP_DRAWS):
        scene, graph, params = _setup(rng, seed + attempt, num_points, num_instances, model_cfg)
        try:
            report = _check(rng, scene, graph, params, model_cfg, loss_cfg, eps, tolerance, corrupt_group)
        except KinkCrossing as e:
            logger.info(f"gradient check seed {seed}: {e}, drawing a new scene")
            continue
        if report.redraws:
            logger.debug(f"gradient check seed {seed}: {report.redraws} directions redrawn at kinks")
        for name, err in report.failures.items():
            logger.warning(f"gradient check failed for {name}: relative error {err:.3e}")
        return report
    raise KinkCrossing(f"gradient check seed {seed}: every scene sat on a kink")
