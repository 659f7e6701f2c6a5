from .generators import CATEGORIES, gen_shape
from .scene import ObjectInstance, SceneSpec, place_scene
from .render import DepthMap, PosedImage, make_posed_image, render_depth
from .observe import ObservationBundle, extract_partial, projected_box_area, select_views
from .dataset import (
    SynthConfig,
    candidate_cameras,
    detection_grid,
    generate_dataset,
    load_bundle,
    load_image,
    make_bundles,
    read_manifest,
    save_image,
)

__all__ = [
    "CATEGORIES",
    "DepthMap",
    "ObjectInstance",
    "ObservationBundle",
    "PosedImage",
    "SceneSpec",
    "SynthConfig",
    "candidate_cameras",
    "detection_grid",
    "extract_partial",
    "gen_shape",
    "generate_dataset",
    "load_bundle",
    "load_image",
    "make_bundles",
    "make_posed_image",
    "place_scene",
    "projected_box_area",
    "read_manifest",
    "render_depth",
    "save_image",
    "select_views",
]
