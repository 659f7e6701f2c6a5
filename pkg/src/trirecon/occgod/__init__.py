from .labels import (
    GridSpec,
    SceneOccupancyGrid,
    gen_occupancy_labels,
    load_occupancy,
    paper_scale_grid,
    save_occupancy,
    voxelize_scan,
)
from .model import (
    DetectionHead,
    DetectorConfig,
    OccGuidedDetector,
    OccupancyHead,
    VoxelBackbone,
    assign_targets,
    decode_box,
    decode_detections,
    encode_box,
    head_grid_centers,
    occ_bce_loss,
)
from .train import DetectionScene, detection_losses, evaluate_detector, load_detector, train_detector

__all__ = [
    "DetectionHead",
    "DetectionScene",
    "DetectorConfig",
    "GridSpec",
    "OccGuidedDetector",
    "OccupancyHead",
    "SceneOccupancyGrid",
    "VoxelBackbone",
    "assign_targets",
    "decode_box",
    "decode_detections",
    "detection_losses",
    "encode_box",
    "evaluate_detector",
    "gen_occupancy_labels",
    "head_grid_centers",
    "load_detector",
    "load_occupancy",
    "occ_bce_loss",
    "paper_scale_grid",
    "save_occupancy",
    "train_detector",
    "voxelize_scan",
]
