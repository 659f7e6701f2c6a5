from .layer import (
    AttentionConfig,
    ConditionTensors,
    DirectProjectionLayer,
    HFALayer,
    ImageEncoder,
    PointAggregator,
    VoxelViewAttention,
    expand,
    flatten,
    fuse_attention,
    gather_image_feats,
    grid_coords,
    image_encode,
    make_condition,
    point_aggregate,
    project_to_views,
)

__all__ = [
    "AttentionConfig",
    "ConditionTensors",
    "DirectProjectionLayer",
    "HFALayer",
    "ImageEncoder",
    "PointAggregator",
    "VoxelViewAttention",
    "expand",
    "flatten",
    "fuse_attention",
    "gather_image_feats",
    "grid_coords",
    "image_encode",
    "make_condition",
    "point_aggregate",
    "project_to_views",
]
