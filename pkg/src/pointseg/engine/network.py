"""Per-point MLP backbone, semantic and embedding heads, and attention-based KNN GCN layers.

Everything runs in float64 with hand-written backward passes. Shapes used below:
N points, D backbone width, C classes, F embedding dimension, k neighbours,
H attention hidden width.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import softmax

from ..models import ModelConfig, Scene, ConfigurationError, InternalError
from .spatial import KnnGraph

logger = logging.getLogger(__name__)

INPUT_DIM = 6


@dataclass
class DenseLayer:
    """Affine map ``x @ weight + bias``."""

    weight: np.ndarray
    bias: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight + self.bias


@dataclass
class GcnLayerParams:
    """Attention scorer f (two affine layers) and the bias-free updator W (2F x F)."""

    f_hidden: DenseLayer
    f_out: DenseLayer
    updator: np.ndarray


@dataclass
class ModelParams:
    """All trainable arrays. Gradients use the same container."""

    backbone: List[DenseLayer]
    semantic_head: DenseLayer
    embedding_head: DenseLayer
    gcn: List[GcnLayerParams] = field(default_factory=list)

    def named_arrays(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Every array in the fixed traversal order used by checkpoints."""
        for i, layer in enumerate(self.backbone):
            yield f"backbone.{i}.weight", layer.weight
            yield f"backbone.{i}.bias", layer.bias
        yield "semantic_head.weight", self.semantic_head.weight
        yield "semantic_head.bias", self.semantic_head.bias
        yield "embedding_head.weight", self.embedding_head.weight
        yield "embedding_head.bias", self.embedding_head.bias
        for i, layer in enumerate(self.gcn):
            yield f"gcn.{i}.f_hidden.weight", layer.f_hidden.weight
            yield f"gcn.{i}.f_hidden.bias", layer.f_hidden.bias
            yield f"gcn.{i}.f_out.weight", layer.f_out.weight
            yield f"gcn.{i}.f_out.bias", layer.f_out.bias
            yield f"gcn.{i}.updator", layer.updator

    def arrays(self) -> List[np.ndarray]:
        return [array for _, array in self.named_arrays()]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        """A new container shaped like this one, filled from ``flat``."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise InternalError(f"parameter payload has {flat.size} values, expected {self.size}")
        out = self.copy()
        offset = 0
        for array in out.arrays():
            array[...] = flat[offset:offset + array.size].reshape(array.shape)
            offset += array.size
        return out

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self.arrays()))

    def map(self, fn) -> "ModelParams":
        """Apply ``fn`` to every array, building a new container."""
        return ModelParams(
            backbone=[DenseLayer(fn(l.weight), fn(l.bias)) for l in self.backbone],
            semantic_head=DenseLayer(fn(self.semantic_head.weight), fn(self.semantic_head.bias)),
            embedding_head=DenseLayer(fn(self.embedding_head.weight), fn(self.embedding_head.bias)),
            gcn=[
                GcnLayerParams(
                    f_hidden=DenseLayer(fn(g.f_hidden.weight), fn(g.f_hidden.bias)),
                    f_out=DenseLayer(fn(g.f_out.weight), fn(g.f_out.bias)),
                    updator=fn(g.updator),
                )
                for g in self.gcn
            ],
        )

    def copy(self) -> "ModelParams":
        return self.map(lambda a: np.array(a, dtype=np.float64, copy=True))

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)


def parameter_group(name: str) -> str:
    """Coarse group of a named array: backbone, heads, and per-layer f and W."""
    parts = name.split(".")
    if parts[0] == "gcn":
        return f"gcn.{parts[1]}.{'W' if parts[2] == 'updator' else 'f'}"
    return parts[0]


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _dense(rng: np.random.Generator, fan_in: int, fan_out: int) -> DenseLayer:
    return DenseLayer(_uniform(rng, fan_in, (fan_in, fan_out)), _uniform(rng, fan_in, (fan_out,)))


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Seeded uniform(+-sqrt(1/fan_in)) initialisation.

    The attention output layer starts at zero so every GCN layer begins as the
    plain KNN mean.
    """
    rng = np.random.default_rng(seed)
    widths = [INPUT_DIM] + list(config.backbone_hidden)
    backbone = [_dense(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]
    width = widths[-1]
    f, h = config.embed_dim, config.attention_hidden
    semantic_head = _dense(rng, width, config.num_classes)
    embedding_head = _dense(rng, width, f)
    gcn = []
    for _ in range(config.gcn_layers):
        gcn.append(
            GcnLayerParams(
                f_hidden=_dense(rng, 2 * f, h),
                f_out=DenseLayer(np.zeros((h, 1)), np.zeros(1)),
                updator=_uniform(rng, 2 * f, (2 * f, f)),
            )
        )
    return ModelParams(backbone, semantic_head, embedding_head, gcn)


def check_params(params: ModelParams, config: ModelConfig) -> None:
    """Raise a configuration error when array shapes disagree with the config."""
    expected = init_params(config, seed=0)
    got = dict(params.named_arrays())
    want = dict(expected.named_arrays())
    if list(got) != list(want):
        raise ConfigurationError(
            "model parameters do not match configuration",
            details={"expected": list(want), "found": list(got)},
        )
    mismatched = {
        name: {"expected": list(want[name].shape), "found": list(array.shape)}
        for name, array in got.items()
        if array.shape != want[name].shape
    }
    if mismatched:
        raise ConfigurationError("model parameter shapes do not match configuration", details=mismatched)


@dataclass
class BackboneTrace:
    inputs: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]

    @property
    def features(self) -> np.ndarray:
        return self.activations[-1] if self.activations else self.inputs


@dataclass
class GcnTrace:
    """Intermediates of one GCN layer."""

    inputs: np.ndarray          # N x F
    neighbor_inputs: np.ndarray  # N x k x F
    pairs: np.ndarray           # N x k x 2F
    f_pre: np.ndarray           # N x k x H
    f_hidden: np.ndarray        # N x k x H
    scores: np.ndarray          # N x k, p_m
    weights: np.ndarray         # N x k, alpha_m
    aggregate: np.ndarray       # N x F
    concat: np.ndarray          # N x 2F
    outputs: np.ndarray         # N x F


@dataclass
class ForwardTrace:
    backbone: BackboneTrace
    logits: np.ndarray
    initial_embeddings: np.ndarray
    gcn: List[GcnTrace]
    aggregation: str = "attention"

    @property
    def refined_embeddings(self) -> np.ndarray:
        return self.gcn[-1].outputs if self.gcn else self.initial_embeddings


def input_features(scene: Scene) -> np.ndarray:
    """Per-point ``[xyz - mean(xyz), rgb]``; scale kept in meters."""
    coords = scene.coords
    centered = coords - coords.mean(axis=0) if coords.shape[0] else coords
    return np.concatenate([centered, scene.colors], axis=1)


def backbone_forward(scene: Scene, params: ModelParams):
    """Backbone MLP plus both heads.

    Returns (features, logits, initial_embeddings, trace).
    """
    x = input_features(scene)
    if params.backbone and params.backbone[0].weight.shape[0] != INPUT_DIM:
        raise ConfigurationError(
            f"backbone expects {params.backbone[0].weight.shape[0]} inputs, scene provides {INPUT_DIM}"
        )
    pre, act = [], []
    h = x
    for layer in params.backbone:
        z = layer(h)
        h = np.maximum(z, 0.0)
        pre.append(z)
        act.append(h)
    trace = BackboneTrace(inputs=x, pre_activations=pre, activations=act)
    try:
        logits = params.semantic_head(h)
        embeddings = params.embedding_head(h)
    except ValueError as e:
        raise ConfigurationError(f"head shapes do not match backbone width: {e}")
    return h, logits, embeddings, trace


def attention_scores(x_i: np.ndarray, neighbor_embeddings: np.ndarray, layer: GcnLayerParams):
    """Scores p = f([x_i ; x_j]) and softmax weights for one point's neighbours."""
    x_i = np.asarray(x_i, dtype=np.float64)
    xn = np.asarray(neighbor_embeddings, dtype=np.float64)
    pairs = np.concatenate([np.broadcast_to(x_i, xn.shape), xn], axis=-1)
    hidden = np.maximum(layer.f_hidden(pairs), 0.0)
    p = layer.f_out(hidden)[..., 0]
    return p, softmax(p, axis=-1)


def _gcn_forward(embeddings: np.ndarray, graph: KnnGraph, layer: GcnLayerParams, aggregation: str) -> GcnTrace:
    x = embeddings
    n, f = x.shape
    if graph.num_points != n:
        raise InternalError(f"graph has {graph.num_points} rows but embeddings have {n}")
    xn = x[graph.neighbors]
    pairs = np.concatenate([np.broadcast_to(x[:, None, :], xn.shape), xn], axis=-1)
    if aggregation == "attention":
        f_pre = layer.f_hidden(pairs)
        f_hidden = np.maximum(f_pre, 0.0)
        scores = layer.f_out(f_hidden)[..., 0]
        weights = softmax(scores, axis=-1)
    else:
        h = layer.f_hidden.weight.shape[1]
        f_pre = f_hidden = np.zeros(xn.shape[:2] + (h,))
        scores = np.zeros(xn.shape[:2])
        weights = np.full(xn.shape[:2], 1.0 / graph.k)
    aggregate = np.einsum("nk,nkf->nf", weights, xn)
    concat = np.concatenate([x, aggregate], axis=1)
    outputs = concat @ layer.updator
    return GcnTrace(x, xn, pairs, f_pre, f_hidden, scores, weights, aggregate, concat, outputs)


def gcn_layer_forward(embeddings: np.ndarray, graph: KnnGraph, layer: GcnLayerParams,
                      aggregation: str = "attention") -> np.ndarray:
    """One refinement step: attention-weighted neighbour mean, concatenated with self, times W."""
    return _gcn_forward(np.asarray(embeddings, dtype=np.float64), graph, layer, aggregation).outputs


def model_forward(scene: Scene, graph: KnnGraph, params: ModelParams, aggregation: str = "attention"):
    """Full network. Returns (logits, initial_embeddings, refined_embeddings, trace)."""
    _, logits, initial, bb_trace = backbone_forward(scene, params)
    traces = []
    x = initial
    for layer in params.gcn:
        t = _gcn_forward(x, graph, layer, aggregation)
        traces.append(t)
        x = t.outputs
    trace = ForwardTrace(bb_trace, logits, initial, traces, aggregation)
    return logits, initial, trace.refined_embeddings, trace


def _dense_backward(x: np.ndarray, grad_out: np.ndarray, layer: DenseLayer, grad_layer: DenseLayer) -> np.ndarray:
    """Accumulate affine-layer gradients; returns the gradient w.r.t. ``x``."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    grad_layer.weight += x2.T @ g2
    grad_layer.bias += g2.sum(axis=0)
    return grad_out @ layer.weight.T


def _gcn_backward(t: GcnTrace, grad_out: np.ndarray, graph: KnnGraph, layer: GcnLayerParams,
                  grads: GcnLayerParams, aggregation: str) -> np.ndarray:
    f = t.inputs.shape[1]
    grads.updator += t.concat.T @ grad_out
    grad_concat = grad_out @ layer.updator.T
    grad_x = grad_concat[:, :f].copy()
    grad_agg = grad_concat[:, f:]

    grad_xn = t.weights[..., None] * grad_agg[:, None, :]
    if aggregation == "attention":
        grad_w = np.einsum("nf,nkf->nk", grad_agg, t.neighbor_inputs)
        # softmax Jacobian-vector product
        grad_p = t.weights * (grad_w - np.sum(t.weights * grad_w, axis=1, keepdims=True))
        grad_hidden = _dense_backward(t.f_hidden, grad_p[..., None], layer.f_out, grads.f_out)
        grad_pre = grad_hidden * (t.f_pre > 0.0)
        grad_pairs = _dense_backward(t.pairs, grad_pre, layer.f_hidden, grads.f_hidden)
        grad_x += grad_pairs[:, :, :f].sum(axis=1)
        grad_xn = grad_xn + grad_pairs[:, :, f:]

    np.add.at(grad_x, graph.neighbors.ravel(), grad_xn.reshape(-1, f))
    return grad_x


def model_backward(trace: ForwardTrace, grad_logits: np.ndarray, grad_initial: np.ndarray,
                   grad_refined: np.ndarray, graph: Optional[KnnGraph], params: ModelParams):
    """Exact gradients of a scalar whose output partials are the given arrays.

    Returns (parameter gradients, gradient w.r.t. the 6 input features).
    """
    if len(trace.gcn) != len(params.gcn) or len(trace.backbone.activations) != len(params.backbone):
        raise InternalError(
            "forward trace does not match parameters",
            details={"trace_gcn": len(trace.gcn), "params_gcn": len(params.gcn)},
        )
    if trace.gcn and (graph is None or graph.num_points != trace.initial_embeddings.shape[0]):
        raise InternalError("GCN backward needs the graph used in the forward pass")
    grads = params.zeros_like()

    grad_emb = np.array(grad_refined, dtype=np.float64, copy=True)
    for i in reversed(range(len(params.gcn))):
        grad_emb = _gcn_backward(trace.gcn[i], grad_emb, graph, params.gcn[i], grads.gcn[i], trace.aggregation)
    grad_emb = grad_emb + grad_initial

    features = trace.backbone.features
    grad_h = _dense_backward(features, grad_logits, params.semantic_head, grads.semantic_head)
    grad_h = grad_h + _dense_backward(features, grad_emb, params.embedding_head, grads.embedding_head)

    bb = trace.backbone
    for i in reversed(range(len(params.backbone))):
        grad_z = grad_h * (bb.pre_activations[i] > 0.0)
        layer_in = bb.activations[i - 1] if i > 0 else bb.inputs
        grad_h = _dense_backward(layer_in, grad_z, params.backbone[i], grads.backbone[i])
    return grads, grad_h
