"""Pinhole camera model: projection, back-projection, look-at, text sidecar I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import RigidScaleTransform


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus a rigid world->camera transform.

    Camera frame: +z forward, +x right, +y down. Pixel (u, v) = (column, row)
    with the origin at the top-left corner.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: RigidScaleTransform = field(default_factory=RigidScaleTransform.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside image")
        if not self.world_to_camera.is_rigid(1e-9):
            raise ValueError("world_to_camera must have scale 1")

    @property
    def camera_to_world(self) -> RigidScaleTransform:
        return self.world_to_camera.inverse()


def project_image(points: np.ndarray, cam: CameraModel):
    """Project world points. Returns (u, v, depth, valid) arrays.

    valid is False when depth <= 0 or (u, v) falls outside the image rectangle.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    pc = cam.world_to_camera.apply(p)
    z = pc[:, 2]
    safe_z = np.where(np.abs(z) > 1e-300, z, 1.0)
    u = cam.fx * pc[:, 0] / safe_z + cam.cx
    v = cam.fy * pc[:, 1] / safe_z + cam.cy
    valid = (z > 0) & (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)
    if single:
        return float(u[0]), float(v[0]), float(z[0]), bool(valid[0])
    return u, v, z, valid


def backproject(u, v, depth, cam: CameraModel) -> np.ndarray:
    """Inverse of project_image for valid pixels; returns world points (N,3)."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    depth = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    x = (u - cam.cx) / cam.fx * depth
    y = (v - cam.cy) / cam.fy * depth
    pc = np.stack([x, y, depth], axis=-1)
    return cam.camera_to_world.apply(pc)


def pixel_rays(cam: CameraModel):
    """World-space rays through every pixel center.

    Returns (origins (H*W,3), dirs (H*W,3)) where dirs have unit z in the
    camera frame, so the ray parameter t equals camera depth.
    """
    us, vs = np.meshgrid(np.arange(cam.width), np.arange(cam.height), indexing="xy")
    x = (us.ravel() - cam.cx) / cam.fx
    y = (vs.ravel() - cam.cy) / cam.fy
    d_cam = np.stack([x, y, np.ones_like(x)], axis=-1)
    c2w = cam.camera_to_world
    dirs = d_cam @ c2w.rotation.T
    origins = np.broadcast_to(c2w.translation, dirs.shape).copy()
    return origins, dirs


def look_at(eye, target, fx, fy, cx, cy, width, height, up=(0.0, 0.0, 1.0)) -> CameraModel:
    """Camera at `eye` looking toward `target`, `up` approximately opposite +y."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        # looking straight up/down: pick an arbitrary horizontal right vector
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
    right /= rn
    down = np.cross(fwd, right)
    r = np.stack([right, down, fwd])  # rows: camera axes in world coords
    w2c = RigidScaleTransform(r, -r @ eye, 1.0)
    return CameraModel(fx, fy, cx, cy, width, height, w2c)


def save_camera(path, cam: CameraModel):
    """Sidecar format: line 1 `fx fy cx cy width height`, lines 2-5 the 4x4
    world->camera matrix, row-major, one row per line."""
    m = cam.world_to_camera.to_matrix()
    with open(path, "w") as f:
        f.write(f"{cam.fx!r} {cam.fy!r} {cam.cx!r} {cam.cy!r} {cam.width} {cam.height}\n")
        for row in m:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_camera(path) -> CameraModel:
    with open(path) as f:
        head = f.readline().split()
        fx, fy, cx, cy = (float(v) for v in head[:4])
        width, height = int(head[4]), int(head[5])
        m = np.array([[float(v) for v in f.readline().split()] for _ in range(4)])
    return CameraModel(fx, fy, cx, cy, width, height, RigidScaleTransform.from_matrix(m))
