"""Adam optimizer and the per-scene training loop."""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..models import ModelConfig, LossConfig, TrainConfig, Scene, InputError, NumericalError
from .loss import total_training_loss
from .network import ModelParams, init_params, model_forward, model_backward
from .spatial import KnnGraph, build_knn_graph

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moment buffers shaped like the parameters, plus step counter and constants."""

    step: int
    m: ModelParams
    v: ModelParams
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: ModelParams, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(0, params.zeros_like(), params.zeros_like(), lr, beta1, beta2, eps)


def _check_finite(grads: ModelParams) -> None:
    for name, array in grads.named_arrays():
        if not np.all(np.isfinite(array)):
            raise NumericalError(
                f"non-finite gradient in parameter group '{name}'",
                details={"group": name, "non_finite": int(np.sum(~np.isfinite(array)))},
            )


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState):
    """One bias-corrected Adam update with constant learning rate.

    Returns new (params, state); the inputs are not modified.
    """
    _check_finite(grads)
    t = state.step + 1
    new_params, new_m, new_v = params.copy(), state.m.copy(), state.v.copy()
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(new_params.arrays(), grads.arrays(), new_m.arrays(), new_v.arrays()):
        if p.shape != g.shape:
            raise InputError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return new_params, replace(state, step=t, m=new_m, v=new_v)


def clip_gradients(grads: ModelParams, max_norm: float) -> ModelParams:
    """Rescale so the global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays())))
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return grads.map(lambda a: a * scale)


@dataclass
class EpochReport:
    epoch: int
    ce: float
    sal_initial: float
    sal_refined: float
    phase: str = "joint"
    seconds: float = field(default=0.0, compare=False)

    @property
    def total(self) -> float:
        return self.ce + self.sal_initial + self.sal_refined


@dataclass
class TrainReport:
    epochs: List[EpochReport] = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)

    def table(self) -> str:
        """Tab-separated per-epoch loss table; reproducible bit for bit."""
        lines = ["epoch\tce\tsal_initial\tsal_refined\ttotal"]
        for e in self.epochs:
            lines.append(f"{e.epoch}\t{e.ce:.17g}\t{e.sal_initial:.17g}\t{e.sal_refined:.17g}\t{e.total:.17g}")
        return "\n".join(lines) + "\n"


def train(dataset: Sequence[Scene], model_cfg: ModelConfig, loss_cfg: LossConfig, train_cfg: TrainConfig,
          graphs: Optional[Sequence[KnnGraph]] = None, params: Optional[ModelParams] = None,
          on_epoch: Optional[Callable[[EpochReport], None]] = None):
    """Pure stochastic training, one scene per Adam step.

    Scene order is reshuffled every epoch from ``train_cfg.seed``. The first
    ``pretrain_epochs`` epochs use cross-entropy only. Returns (params, report, state).
    """
    if not dataset:
        raise InputError("training dataset is empty")
    if graphs is None:
        graphs = [build_knn_graph(s.coords, model_cfg.knn_k) for s in dataset]
    if len(graphs) != len(dataset):
        raise InputError(f"{len(graphs)} graphs for {len(dataset)} scenes")

    params = init_params(model_cfg, train_cfg.seed) if params is None else params.copy()
    state = AdamState.fresh(params, train_cfg.lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
    rng = np.random.default_rng(train_cfg.seed)
    report = TrainReport()
    started = time.perf_counter()

    for epoch in range(1, train_cfg.epochs + 1):
        epoch_start = time.perf_counter()
        pretraining = epoch <= train_cfg.pretrain_epochs
        sums = np.zeros(3)
        for idx in rng.permutation(len(dataset)):
            scene, graph = dataset[idx], graphs[idx]
            logits, initial, refined, trace = model_forward(scene, graph, params, model_cfg.aggregation)
            loss = total_training_loss(scene, logits, initial, refined, loss_cfg, instance_terms=not pretraining)
            grads, _ = model_backward(trace, loss.grad_logits, loss.grad_initial, loss.grad_refined, graph, params)
            if train_cfg.max_grad_norm is not None:
                grads = clip_gradients(grads, train_cfg.max_grad_norm)
            try:
                params, state = adam_step(params, grads, state)
            except NumericalError as e:
                e.details.update({"scene": scene.scene_id, "epoch": epoch})
                raise
            sums += (loss.ce, loss.sal_initial, loss.sal_refined)

        means = sums / len(dataset)
        entry = EpochReport(
            epoch, float(means[0]), float(means[1]), float(means[2]),
            phase="pretrain" if pretraining else "joint",
            seconds=time.perf_counter() - epoch_start,
        )
        report.epochs.append(entry)
        logger.info(
            f"epoch {epoch} [{entry.phase}] ce={entry.ce:.6f} sal_init={entry.sal_initial:.6f} "
            f"sal_refined={entry.sal_refined:.6f} total={entry.total:.6f} ({entry.seconds:.1f}s)"
        )
        if on_epoch is not None:
            on_epoch(entry)

    report.wall_time = time.perf_counter() - started
    return params, report, state
