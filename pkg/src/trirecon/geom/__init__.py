from .transforms import RigidScaleTransform, yaw_matrix
from .shapes import (
    BOX,
    CYLINDER,
    ELLIPSOID,
    Primitive,
    Shape,
    apply_augmentation,
    augmentation_transform,
    normalize_to_unit,
    occupancy,
    ray_cast,
    sample_surface,
    shape_bounds,
)
from .camera import CameraModel, backproject, load_camera, look_at, pixel_rays, project_image, save_camera
from .triplane import PlaneId, bilinear_sample, project_triplane, project_triplane_torch, sample_planes
from .polygon import clip_convex, convex_hull, polygon_area
from .ply import load_ply, save_ply

__all__ = [
    "BOX",
    "CYLINDER",
    "ELLIPSOID",
    "CameraModel",
    "PlaneId",
    "Primitive",
    "RigidScaleTransform",
    "Shape",
    "apply_augmentation",
    "augmentation_transform",
    "backproject",
    "bilinear_sample",
    "clip_convex",
    "convex_hull",
    "load_camera",
    "load_ply",
    "look_at",
    "normalize_to_unit",
    "occupancy",
    "pixel_rays",
    "polygon_area",
    "project_image",
    "project_triplane",
    "project_triplane_torch",
    "ray_cast",
    "sample_planes",
    "sample_surface",
    "save_camera",
    "save_ply",
    "shape_bounds",
    "yaw_matrix",
]
