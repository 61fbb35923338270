"""Configuration models.

Every config type is an immutable pydantic model. Field names are the keys used in
the YAML configuration file, one section per type.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _FrozenConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ModelConfig(_FrozenConfig):
    """Network shape: backbone widths, heads, and the GCN refinement stack."""

    embed_dim: int = Field(4, ge=2)
    num_classes: int = Field(4, gt=0)
    backbone_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    attention_hidden: int = Field(16, gt=0)
    gcn_layers: int = Field(2, ge=0, le=3)
    knn_k: int = Field(8, ge=1)
    aggregation: Literal["attention", "mean"] = "attention"

    @field_validator("backbone_hidden")
    @classmethod
    def _positive_widths(cls, widths: List[int]) -> List[int]:
        if any(w <= 0 for w in widths):
            raise ValueError("backbone layer widths must be positive")
        return widths


class LossConfig(_FrozenConfig):
    """Structure-aware loss thresholds and variants."""

    alpha: float = Field(0.7, ge=0.0)
    beta: float = Field(1.5, ge=0.0)
    intra_normalization: Literal["sum", "mean"] = "mean"
    structure_weighting: Literal["sigmoid_distance", "uniform"] = "sigmoid_distance"

    @model_validator(mode="after")
    def _beta_above_alpha(self) -> "LossConfig":
        if not self.beta > self.alpha:
            raise ValueError(f"beta ({self.beta}) must exceed alpha ({self.alpha})")
        return self


class ClusterConfig(_FrozenConfig):
    """Flat-kernel mean-shift settings. Unset radii derive from the bandwidth."""

    bandwidth: float = Field(1.0, gt=0.0)
    merge_radius: Optional[float] = Field(None, gt=0.0)
    shift_tolerance: Optional[float] = Field(None, gt=0.0)
    max_iterations: int = Field(300, gt=0)
    min_cluster_points: int = Field(10, gt=0)

    @model_validator(mode="after")
    def _derive_radii(self) -> "ClusterConfig":
        # frozen model: defaults are filled through object.__setattr__
        if self.merge_radius is None:
            object.__setattr__(self, "merge_radius", self.bandwidth / 2.0)
        if self.shift_tolerance is None:
            object.__setattr__(self, "shift_tolerance", 1e-3 * self.bandwidth)
        if self.merge_radius > self.bandwidth:
            raise ValueError("merge_radius must not exceed bandwidth")
        if self.shift_tolerance >= self.bandwidth:
            raise ValueError("shift_tolerance must be below bandwidth")
        return self


class TrainConfig(_FrozenConfig):
    """Adam and schedule settings for the per-scene training loop."""

    epochs: int = Field(40, ge=0)
    seed: int = 0
    lr: float = Field(0.001, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    max_grad_norm: Optional[float] = Field(None, gt=0.0)
    pretrain_epochs: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)


class SynthConfig(_FrozenConfig):
    """Synthetic room generator settings."""

    seed: int = 0
    num_train: int = Field(200, ge=0)
    num_test: int = Field(50, ge=0)
    points_per_scene: int = Field(1024, gt=0)
    objects_min: int = Field(3, ge=1)
    objects_max: int = Field(7, ge=1)
    floor_instance: bool = True
    floor_fraction: float = Field(0.25, gt=0.0, lt=1.0)
    min_center_separation: float = Field(0.5, gt=0.0)
    min_clearance: float = Field(1.0, ge=0.0)
    min_object_points: int = Field(40, gt=0)
    coord_noise: float = Field(0.01, ge=0.0)
    color_jitter: float = Field(0.05, ge=0.0)
    room_extent: Tuple[float, float, float] = (10.0, 10.0, 3.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "SynthConfig":
        if self.objects_max < self.objects_min:
            raise ValueError("objects_max must be >= objects_min")
        if any(e <= 0 for e in self.room_extent):
            raise ValueError("room_extent entries must be positive")
        return self


class EvalConfig(_FrozenConfig):
    """Evaluation thresholds."""

    iou_thresholds: List[float] = Field(default_factory=lambda: [0.5, 0.25])
    ap_sweep: bool = True

    @field_validator("iou_thresholds")
    @classmethod
    def _unit_interval(cls, values: List[float]) -> List[float]:
        if not values or any(not 0.0 < v <= 1.0 for v in values):
            raise ValueError("IoU thresholds must lie in (0, 1]")
        return values


class LoggingConfig(_FrozenConfig):
    """Log destinations and level."""

    level: Literal["debug", "info", "warning", "error", "critical"] = "info"
    log_file: Optional[str] = None
    console: bool = True
