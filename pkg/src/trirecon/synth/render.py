"""Analytic depth rendering and geometric posed images (RGB-D stand-in).

A PosedImage carries 4 channels: normalized inverse depth 1/(1+d) and the
surface normal in the camera frame, oriented toward the camera. No-hit pixels
are zero in every channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom import CameraModel, pixel_rays, ray_cast
from .scene import SceneSpec

NO_HIT = np.inf


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel camera depth in meters; NO_HIT (inf) marks misses."""

    depth: np.ndarray  # (H, W) float64
    normals: np.ndarray  # (H, W, 3) world-frame outward normals, 0 on miss

    @property
    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)


@dataclass(frozen=True)
class PosedImage:
    channels: np.ndarray  # (H, W, 4) float32: inv-depth, normal xyz (camera frame)
    camera: CameraModel


def render_depth(scene: SceneSpec, cam: CameraModel) -> DepthMap:
    """Nearest analytic ray hit across all scene instances, per pixel."""
    origins, dirs = pixel_rays(cam)
    n = len(origins)
    t_best = np.full(n, NO_HIT)
    normals = np.zeros((n, 3))
    for inst in scene.instances:
        t, nrm = ray_cast(inst.world_shape(), origins, dirs)
        better = t < t_best
        if better.any():
            t_best = np.where(better, t, t_best)
            normals[better] = nrm[better]
    h, w = cam.height, cam.width
    return DepthMap(t_best.reshape(h, w), normals.reshape(h, w, 3))


def make_posed_image(scene: SceneSpec, cam: CameraModel, depthmap: DepthMap | None = None) -> PosedImage:
    if depthmap is None:
        depthmap = render_depth(scene, cam)
    h, w = cam.height, cam.width
    hit = depthmap.hit_mask
    inv_depth = np.zeros((h, w), dtype=np.float64)
    inv_depth[hit] = 1.0 / (1.0 + depthmap.depth[hit])
    # normals to camera frame, flipped to face the camera
    n_cam = depthmap.normals.reshape(-1, 3) @ cam.world_to_camera.rotation.T
    _, dirs = pixel_rays(cam)
    d_cam = dirs @ cam.world_to_camera.rotation.T
    flip = (n_cam * d_cam).sum(axis=1) > 0
    n_cam[flip] *= -1.0
    n_cam = n_cam.reshape(h, w, 3)
    n_cam[~hit] = 0.0
    channels = np.concatenate([inv_depth[..., None], n_cam], axis=-1).astype(np.float32)
    return PosedImage(channels, cam)
