"""Cross-entropy and the structure-aware embedding loss with exact gradients.

The structure-aware loss pulls each point's embedding toward its instance mean,
weighted by how far the point sits from the instance's geometric center, and pushes
instance means at least ``beta`` apart. Non-differentiable points (hinge kinks,
zero distances) take a zero subgradient.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ..models import LossConfig, Scene, InputError

logger = logging.getLogger(__name__)


@dataclass
class InstanceStat:
    """Per-instance statistics for one embedding matrix."""

    indices: np.ndarray
    spatial_center: np.ndarray
    spatial_distances: np.ndarray
    structure_weights: np.ndarray
    embedding_mean: np.ndarray
    embedding_offsets: np.ndarray
    embedding_distances: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass
class InstanceStats:
    instances: List[InstanceStat]
    num_points: int
    embed_dim: int

    @property
    def num_instances(self) -> int:
        return len(self.instances)


def compute_instance_stats(scene: Scene, embeddings: np.ndarray,
                           structure_weighting: str = "sigmoid_distance") -> InstanceStats:
    """Spatial centers, embedding means and member distances per instance.

    Points with instance id -1 are left out; a scene without instances gives empty stats.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    stats = []
    for members in scene.instance_members():
        coords = scene.coords[members]
        center = coords.mean(axis=0)
        d = np.linalg.norm(coords - center, axis=1)
        if structure_weighting == "sigmoid_distance":
            w = expit(d)
        elif structure_weighting == "uniform":
            w = np.ones_like(d)
        else:
            raise InputError(f"unknown structure weighting '{structure_weighting}'")
        emb = embeddings[members]
        mean = emb.mean(axis=0)
        offsets = emb - mean
        stats.append(
            InstanceStat(members, center, d, w, mean, offsets, np.linalg.norm(offsets, axis=1))
        )
    return InstanceStats(stats, embeddings.shape[0], embeddings.shape[1])


def intra_loss(stats: InstanceStats, cfg: LossConfig) -> Tuple[float, np.ndarray]:
    """Weighted squared hinge on member-to-mean distances, averaged over instances."""
    grad = np.zeros((stats.num_points, stats.embed_dim))
    m = stats.num_instances
    if m == 0:
        return 0.0, grad
    total = 0.0
    for inst in stats.instances:
        scale = 1.0 / m
        if cfg.intra_normalization == "mean":
            scale /= inst.size
        excess = np.maximum(inst.embedding_distances - cfg.alpha, 0.0)
        total += scale * float(np.sum(inst.structure_weights * excess ** 2))

        s = inst.embedding_distances
        active = (excess > 0.0) & (s > 0.0)
        coef = np.zeros_like(s)
        coef[active] = 2.0 * scale * inst.structure_weights[active] * excess[active] / s[active]
        g = coef[:, None] * inst.embedding_offsets
        # the mean depends on every member
        grad[inst.indices] += g - g.sum(axis=0) / inst.size
    return total, grad


def inter_loss(stats: InstanceStats, cfg: LossConfig) -> Tuple[float, np.ndarray]:
    """Squared hinge on pairwise mean distances over ordered pairs, divided by M(M-1)."""
    grad = np.zeros((stats.num_points, stats.embed_dim))
    m = stats.num_instances
    if m < 2:
        return 0.0, grad
    means = np.stack([inst.embedding_mean for inst in stats.instances])
    diff = means[:, None, :] - means[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(dist, np.inf)
    margin = np.maximum(cfg.beta - dist, 0.0)
    norm = 1.0 / (m * (m - 1))
    value = norm * float(np.sum(margin ** 2))

    # each unordered pair appears twice in the ordered sum
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where((margin > 0.0) & (dist > 0.0), -4.0 * norm * margin / dist, 0.0)
    grad_means = np.einsum("ij,ijf->if", coef, diff)
    for inst, g in zip(stats.instances, grad_means):
        grad[inst.indices] += g / inst.size
    return value, grad


def structure_aware_loss(scene: Scene, embeddings: np.ndarray, cfg: LossConfig) -> Tuple[float, np.ndarray]:
    """Intra plus inter terms and their summed gradient."""
    stats = compute_instance_stats(scene, embeddings, cfg.structure_weighting)
    intra, g_intra = intra_loss(stats, cfg)
    inter, g_inter = inter_loss(stats, cfg)
    return intra + inter, g_intra + g_inter


def cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood over masked points."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    grad = np.zeros_like(logits)
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        return 0.0, grad
    picked = labels[rows]
    bad = (picked < 0) | (picked >= c)
    if np.any(bad):
        first = int(rows[np.flatnonzero(bad)[0]])
        raise InputError(
            f"semantic label {int(labels[first])} out of range [0, {c}) at point {first}",
            details={"point": first, "label": int(labels[first]), "num_classes": c},
        )
    log_p = log_softmax(logits[rows], axis=1)
    value = -float(np.mean(log_p[np.arange(rows.size), picked]))
    probs = softmax(logits[rows], axis=1)
    probs[np.arange(rows.size), picked] -= 1.0
    grad[rows] = probs / rows.size
    return value, grad


@dataclass
class TrainingLoss:
    """Three-term training loss and the gradients routed to each network output."""

    ce: float
    sal_initial: float
    sal_refined: float
    grad_logits: np.ndarray
    grad_initial: np.ndarray
    grad_refined: np.ndarray

    @property
    def value(self) -> float:
        return self.ce + self.sal_initial + self.sal_refined


def total_training_loss(scene: Scene, logits: np.ndarray, initial_emb: np.ndarray, refined_emb: np.ndarray,
                        cfg: LossConfig, instance_terms: bool = True) -> TrainingLoss:
    """CE(logits) + SAL(initial) + SAL(refined) with unit weights.

    ``instance_terms=False`` keeps only cross-entropy (backbone pretraining).
    """
    ce, g_logits = cross_entropy(logits, scene.semantic_labels)
    if not instance_terms:
        zeros = np.zeros_like(np.asarray(initial_emb, dtype=np.float64))
        return TrainingLoss(ce, 0.0, 0.0, g_logits, zeros, np.zeros_like(zeros))
    sal_i, g_i = structure_aware_loss(scene, initial_emb, cfg)
    sal_r, g_r = structure_aware_loss(scene, refined_emb, cfg)
    return TrainingLoss(ce, sal_i, sal_r, g_logits, g_i, g_r)
