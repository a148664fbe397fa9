"""Two-view fusion attention for 8-class facial expression recognition."""

from ._core import (
    CLASS_NAMES,
    FerfusionError,
    FusionModel,
    compose_views,
    crop_region,
    cross_entropy,
    evaluate,
    generate_two_view,
    has_sufficient_keypoints,
    keygen_layer_count,
    load_embeddings,
    macro_f1,
    region_rect,
    scaled_dot_attention,
    smooth,
    smooth_logits,
    train_fusion,
    uniform_class_sample,
)

__all__ = [
    "CLASS_NAMES",
    "FerfusionError",
    "FusionModel",
    "compose_views",
    "crop_region",
    "cross_entropy",
    "evaluate",
    "generate_two_view",
    "has_sufficient_keypoints",
    "keygen_layer_count",
    "load_embeddings",
    "macro_f1",
    "region_rect",
    "scaled_dot_attention",
    "smooth",
    "smooth_logits",
    "train_fusion",
    "uniform_class_sample",
]
