"""Per-object observations: view selection, partial-cloud extraction, bundles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom import CameraModel, backproject, project_image
from ..geom.polygon import clip_convex, convex_hull, polygon_area
from ..metrics.boxes import OrientedBox
from ..seeding import derive_rng
from .render import DepthMap, PosedImage
from .scene import ObjectInstance, SceneSpec


def projected_box_area(box: OrientedBox, cam: CameraModel) -> float:
    """Pixel area of the box's projected convex hull, clipped to the image."""
    corners = box.corners()
    u, v, z, _ = project_image(corners, cam)
    front = z > 1e-6
    if front.sum() < 3:
        return 0.0
    hull = convex_hull(np.column_stack([u[front], v[front]]))
    if len(hull) < 3:
        return 0.0
    rect = np.array(
        [[0.0, 0.0], [cam.width - 1.0, 0.0], [cam.width - 1.0, cam.height - 1.0], [0.0, cam.height - 1.0]]
    )
    return polygon_area(clip_convex(hull, rect))


def select_views(box: OrientedBox, k: int, candidate_cams) -> list:
    """The k candidate cameras with the largest projected-box area.

    Ties break by candidate index. Raises if the box is invisible everywhere.
    """
    if k > len(candidate_cams):
        raise ValueError("k exceeds candidate count")
    areas = [projected_box_area(box, cam) for cam in candidate_cams]
    if max(areas) <= 0.0:
        raise ValueError("box invisible in all candidate cameras")
    order = sorted(range(len(candidate_cams)), key=lambda i: (-areas[i], i))
    return [candidate_cams[i] for i in order[:k]]


def extract_partial(
    depthmaps: list,
    cams: list,
    instance: ObjectInstance,
    noise_sigma: float = 0.005,
    seed: int = 0,
    box_pad: float = 1.02,
    box: OrientedBox | None = None,
) -> np.ndarray:
    """Back-project depth pixels inside the instance's box into canonical space.

    `box` may be a noise-perturbed detection box; defaults to the GT box. The
    crop uses the (padded) box while canonicalization uses the instance pose,
    matching a detect-then-reconstruct pipeline. Gaussian noise of
    `noise_sigma` (canonical units) is added, deterministic per seed.
    """
    if box is None:
        box = instance.world_box()
    padded = OrientedBox(box.center, box.size * box_pad, box.yaw)
    world_pts = []
    for dm, cam in zip(depthmaps, cams):
        hit = dm.hit_mask
        if not hit.any():
            continue
        vs, us = np.nonzero(hit)
        pts = backproject(us.astype(np.float64), vs.astype(np.float64), dm.depth[hit], cam)
        keep = padded.contains(pts)
        if keep.any():
            world_pts.append(pts[keep])
    if not world_pts:
        raise ValueError("fully occluded: no depth pixels inside the instance box")
    world = np.concatenate(world_pts)
    canonical = instance.pose.inverse().apply(world)
    if noise_sigma > 0:
        rng = derive_rng(seed, "partial_noise")
        canonical = canonical + rng.normal(0.0, noise_sigma, canonical.shape)
    return canonical


@dataclass
class ObservationBundle:
    """One reconstruction sample: canonical partial cloud + posed images + GT."""

    partial: np.ndarray  # (N, 3) canonical space
    images: list  # list of PosedImage (2..5 views)
    gt_shape: object  # Shape, canonical space
    gt_box: OrientedBox  # world space
    category: str
    pose: object  # RigidScaleTransform canonical -> world
    bundle_id: str = ""

    def __post_init__(self):
        if not (0 <= len(self.images) <= 5):
            raise ValueError("bundles carry at most 5 views")
