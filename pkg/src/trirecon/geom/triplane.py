"""Triplane projection and bilinear sampling (align-corners convention).

The canonical cube is [-0.5, 0.5]^3. The three planes drop one coordinate:

    XY: (u, v) = (x, y)    XZ: (u, v) = (x, z)    YZ: (u, v) = (y, z)

mapped affinely to [0, 1]^2. In a sampled map, u indexes axis 0 and v axis 1,
and uv=(0,0) / uv=(1,1) hit the centers of the first / last texels
(align-corners). Plane stacking order everywhere is (XY, XZ, YZ).
"""

from __future__ import annotations

from enum import Enum

import numpy as np
import torch


class PlaneId(Enum):
    XY = 0
    XZ = 1
    YZ = 2


# coordinate indices kept by each plane, in (u, v) order
PLANE_AXES = {PlaneId.XY: (0, 1), PlaneId.XZ: (0, 2), PlaneId.YZ: (1, 2)}


def project_triplane(p, plane: PlaneId):
    """Project a canonical-space point to plane uv in [0,1]^2.

    Returns (u, v, in_bounds); out-of-cube points are clamped and flagged.
    """
    p = np.asarray(p, dtype=np.float64)
    a, b = PLANE_AXES[plane]
    u = p[..., a] + 0.5
    v = p[..., b] + 0.5
    in_bounds = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
    u = np.clip(u, 0.0, 1.0)
    v = np.clip(v, 0.0, 1.0)
    if p.ndim == 1:
        return float(u), float(v), bool(in_bounds)
    return u, v, in_bounds


def project_triplane_torch(points: torch.Tensor) -> torch.Tensor:
    """Batched uv for all three planes. points: (..., 3) -> (..., 3, 2), clamped."""
    uv = torch.stack(
        [
            points[..., (0, 1)],
            points[..., (0, 2)],
            points[..., (1, 2)],
        ],
        dim=-2,
    )
    return (uv + 0.5).clamp(0.0, 1.0)


def bilinear_sample(feature_map: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
    """Bilinearly sample an (H, W, C) map at uv points (..., 2) in [0,1]^2.

    Align-corners: u=0 hits texel row 0, u=1 hits row H-1. Out-of-range uv is
    clamped to the border. Differentiable in both the map and uv.
    """
    if feature_map.ndim != 3:
        raise ValueError("feature_map must be (H, W, C)")
    h, w, _ = feature_map.shape
    if h < 2 or w < 2:
        raise ValueError("map must be at least 2x2")
    uv = uv.clamp(0.0, 1.0)
    r = uv[..., 0] * (h - 1)
    c = uv[..., 1] * (w - 1)
    r0 = r.detach().floor().long().clamp(0, h - 2)
    c0 = c.detach().floor().long().clamp(0, w - 2)
    fr = r - r0
    fc = c - c0
    m00 = feature_map[r0, c0]
    m01 = feature_map[r0, c0 + 1]
    m10 = feature_map[r0 + 1, c0]
    m11 = feature_map[r0 + 1, c0 + 1]
    fr = fr[..., None]
    fc = fc[..., None]
    return (
        m00 * (1 - fr) * (1 - fc)
        + m01 * (1 - fr) * fc
        + m10 * fr * (1 - fc)
        + m11 * fr * fc
    )


def sample_planes(planes: torch.Tensor, points: torch.Tensor) -> torch.Tensor:
    """Sample all three planes at canonical points and return per-plane features.

    planes: (3, C, H, W); points: (N, 3) -> (N, 3, C).
    """
    uv = project_triplane_torch(points)  # (N, 3, 2)
    feats = []
    for k in range(3):
        fmap = planes[k].permute(1, 2, 0)  # (H, W, C)
        feats.append(bilinear_sample(fmap, uv[:, k, :]))
    return torch.stack(feats, dim=1)
