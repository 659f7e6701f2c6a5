from .recon import (
    ReconRow,
    chamfer_l2,
    chamfer_l2_bruteforce,
    eval_recon,
    fscore,
    grid_centers,
    miou,
    sample_mesh_surface,
)
from .boxes import DetectionReport, OrientedBox, map_mar, oriented_iou, oriented_iou_montecarlo

__all__ = [
    "DetectionReport",
    "OrientedBox",
    "ReconRow",
    "chamfer_l2",
    "chamfer_l2_bruteforce",
    "eval_recon",
    "fscore",
    "grid_centers",
    "map_mar",
    "miou",
    "oriented_iou",
    "oriented_iou_montecarlo",
    "sample_mesh_surface",
]
