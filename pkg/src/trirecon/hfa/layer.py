"""Hybrid feature aggregation: partial points and posed images into triplanes.

Stage order inside a layer: point aggregation onto the planes, triplane ->
volumetric grid expansion (broadcast sum), voxel -> image projection with
bilinear feature sampling, per-voxel masked cross-attention over views, grid ->
triplane flattening (axis means), and a final residual to the layer input.
An alternative layer that projects the plane pixels straight into the images
(no grid) is provided as the comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..geom import RigidScaleTransform
from ..vae.layers import PointPlaneEncoder, plane_cell_index, scatter_max_planes
from ..geom.triplane import sample_planes


@dataclass
class AttentionConfig:
    heads: int = 2
    dim: int = 32  # shared key/query/value width
    ffn_mult: int = 2

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError("attention dim must be divisible by head count")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class ConditionTensors:
    """One sample's conditioning, already on-device.

    pose maps canonical [-0.5,0.5]^3 coordinates into the world frame the
    cameras live in (possibly a noisy detection box pose).
    """

    partial: torch.Tensor | None  # (P, 3) canonical
    images: torch.Tensor | None  # (V, 4, Hi, Wi)
    intrinsics: torch.Tensor | None  # (V, 4) fx fy cx cy
    w2c: torch.Tensor | None  # (V, 4, 4)
    pose: torch.Tensor  # (4, 4) canonical -> world

    @property
    def n_views(self) -> int:
        return 0 if self.images is None else int(self.images.shape[0])


def make_condition(partial, images, pose: RigidScaleTransform, use_partial=True, use_images=True,
                   dtype=torch.float32) -> ConditionTensors:
    """Build ConditionTensors from numpy observations (see synth.ObservationBundle)."""
    pt = None
    if use_partial and partial is not None and len(partial):
        pt = torch.as_tensor(np.asarray(partial), dtype=dtype)
    imgs = intr = w2c = None
    if use_images and images:
        imgs = torch.stack([torch.as_tensor(im.channels, dtype=dtype).permute(2, 0, 1) for im in images])
        intr = torch.tensor([[im.camera.fx, im.camera.fy, im.camera.cx, im.camera.cy] for im in images], dtype=dtype)
        w2c = torch.stack(
            [torch.as_tensor(im.camera.world_to_camera.to_matrix(), dtype=dtype) for im in images]
        )
    pose_m = torch.as_tensor(pose.to_matrix(), dtype=dtype)
    return ConditionTensors(partial=pt, images=imgs, intrinsics=intr, w2c=w2c, pose=pose_m)


class ImageEncoder(nn.Module):
    """Small shared convolutional encoder: (V, 4, H, W) -> (V, C, H/4, W/4)."""

    def __init__(self, out_channels=16, width=16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(4, width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, width, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(width, out_channels, 3, padding=1),
        )
        self.out_channels = out_channels

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != 4:
            raise ValueError("images must be (V, 4, H, W) geometric channels")
        return self.net(images)


def image_encode(encoder: ImageEncoder, images) -> torch.Tensor:
    """Encode a list/stack of same-sized views; view order preserved."""
    if isinstance(images, (list, tuple)):
        shapes = {tuple(im.shape) for im in images}
        if len(shapes) > 1:
            raise ValueError("all views must share the same image size")
        images = torch.stack(list(images))
    return encoder(images)


def expand(t: torch.Tensor) -> torch.Tensor:
    """Triplane -> grid broadcast sum. (.., 3, C, H, W) -> (.., C, H, H, H).

    G[..., i, j, k] = XY[..., i, j] + XZ[..., i, k] + YZ[..., j, k].
    """
    xy, xz, yz = t[..., 0, :, :, :], t[..., 1, :, :, :], t[..., 2, :, :, :]
    return xy.unsqueeze(-1) + xz.unsqueeze(-2) + yz.unsqueeze(-3)


def flatten(g: torch.Tensor) -> torch.Tensor:
    """Grid -> triplane by axis means. (.., C, H, H, H) -> (.., 3, C, H, W)."""
    xy = g.mean(dim=-1)
    xz = g.mean(dim=-2)
    yz = g.mean(dim=-3)
    return torch.stack([xy, xz, yz], dim=-4)


_GRID_COORDS_CACHE = {}


def grid_coords(reso: int, dtype=torch.float32) -> torch.Tensor:
    """Canonical coordinates of grid nodes, (reso^3, 3); node i -> i/(reso-1)-0.5."""
    key = (reso, dtype)
    if key not in _GRID_COORDS_CACHE:
        ax = torch.arange(reso, dtype=dtype) / (reso - 1) - 0.5
        g = torch.stack(torch.meshgrid(ax, ax, ax, indexing="ij"), dim=-1)
        _GRID_COORDS_CACHE[key] = g.reshape(-1, 3)
    return _GRID_COORDS_CACHE[key]


def project_to_views(points_canon: torch.Tensor, cond: ConditionTensors, image_hw):
    """Project canonical points into every view.

    Returns (uv_norm (V, N, 2) in [0,1] (v,u) order for sampling, valid (V, N)).
    """
    n = points_canon.shape[0]
    ones = points_canon.new_ones((n, 1))
    world = torch.cat([points_canon, ones], dim=1) @ cond.pose.T  # (N, 4)
    cam = torch.einsum("vrc,nc->vnr", cond.w2c, world)[..., :3]  # (V, N, 3)
    z = cam[..., 2]
    safe_z = torch.where(z.abs() > 1e-9, z, torch.ones_like(z))
    fx, fy, cx, cy = cond.intrinsics.T
    u = fx[:, None] * cam[..., 0] / safe_z + cx[:, None]
    v = fy[:, None] * cam[..., 1] / safe_z + cy[:, None]
    h_i, w_i = image_hw
    valid = (z > 1e-6) & (u >= 0) & (u <= w_i - 1) & (v >= 0) & (v <= h_i - 1)
    uv = torch.stack([v / (h_i - 1), u / (w_i - 1)], dim=-1).clamp(0.0, 1.0)
    return uv, valid


def gather_image_feats(points_canon: torch.Tensor, feats: torch.Tensor, cond: ConditionTensors, image_hw):
    """Bilinearly sample per-view features at projected canonical points.

    feats: (V, C, hf, wf) encoded view features. Returns
    (gathered (N, V, C), mask (N, V)); invalid projections are zeroed.
    """
    uv, valid = project_to_views(points_canon, cond, image_hw)
    # grid_sample wants xy in [-1, 1]; uv is (v_norm, u_norm)
    grid = torch.stack([uv[..., 1] * 2 - 1, uv[..., 0] * 2 - 1], dim=-1).unsqueeze(1)  # (V,1,N,2)
    sampled = F.grid_sample(feats, grid, mode="bilinear", align_corners=True)  # (V,C,1,N)
    gathered = sampled.squeeze(2).permute(2, 0, 1)  # (N, V, C)
    mask = valid.T  # (N, V)
    return gathered * mask.unsqueeze(-1), mask


class VoxelViewAttention(nn.Module):
    """Masked multi-head cross-attention: voxel query over its view samples,
    followed by one feed-forward sublayer. Voxels with no valid view pass
    through unchanged."""

    def __init__(self, channels: int, c_img: int, cfg: AttentionConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.dim
        self.q = nn.Linear(channels, d)
        self.k = nn.Linear(c_img, d)
        self.v = nn.Linear(c_img, d)
        self.out = nn.Linear(d, channels)
        self.ffn = nn.Sequential(
            nn.Linear(channels, cfg.ffn_mult * channels),
            nn.SiLU(),
            nn.Linear(cfg.ffn_mult * channels, channels),
        )

    def attend(self, queries: torch.Tensor, gathered: torch.Tensor, mask: torch.Tensor,
               return_weights: bool = False):
        """queries (N, C), gathered (N, V, C_img), mask (N, V) -> attended (N, C).

        Masked softmax over valid views; rows with zero valid views return 0.
        """
        n, v_cnt, _ = gathered.shape
        h = self.cfg.heads
        dh = self.cfg.dim // h
        q = self.q(queries).reshape(n, 1, h, dh)
        k = self.k(gathered).reshape(n, v_cnt, h, dh)
        v = self.v(gathered).reshape(n, v_cnt, h, dh)
        # broadcast reductions instead of einsum: far faster on CPU here
        logits = (q * k).sum(-1).transpose(1, 2) / dh**0.5  # (n, h, v)
        logits = logits.masked_fill(~mask[:, None, :], float("-inf"))
        any_valid = mask.any(dim=1)
        weights = torch.softmax(logits, dim=-1)
        weights = torch.where(any_valid[:, None, None], weights, torch.zeros_like(weights))
        attended = (weights.transpose(1, 2).unsqueeze(-1) * v).sum(dim=1).reshape(n, self.cfg.dim)
        out = self.out(attended)
        out = torch.where(any_valid[:, None], out, torch.zeros_like(out))
        if return_weights:
            return out, weights
        return out

    def forward(self, feats: torch.Tensor, gathered: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        any_valid = mask.any(dim=1, keepdim=True)
        attended = self.attend(feats, gathered, mask)
        feats = feats + attended
        feats = feats + torch.where(any_valid, self.ffn(feats), torch.zeros_like(feats))
        return feats


def fuse_attention(g: torch.Tensor, gathered: torch.Tensor, mask: torch.Tensor,
                   attn: VoxelViewAttention) -> torch.Tensor:
    """Apply masked view attention to a grid. g: (C, R, R, R); gathered (N, V, C_img)."""
    c, r = g.shape[0], g.shape[1]
    flat = g.reshape(c, -1).T  # (N, C)
    out = attn(flat, gathered, mask)
    return out.T.reshape(c, r, r, r)


class PointAggregator(nn.Module):
    """Project partial points onto the planes and residually add pooled features.

    Per-point input: coordinates plus the local triplane sample at that point.
    Cells without points contribute exactly zero, so an empty cloud is a no-op.
    """

    def __init__(self, channels: int, feat_dim: int = 32):
        super().__init__()
        self.mlp = nn.Sequential(nn.Linear(3 + channels, feat_dim), nn.SiLU(), nn.Linear(feat_dim, feat_dim))
        self.proj = nn.Linear(feat_dim, channels)

    def forward(self, t: torch.Tensor, partial: torch.Tensor | None) -> torch.Tensor:
        """t: (3, C, H, W); partial: (P, 3) canonical (clamped) or None."""
        if partial is None or len(partial) == 0:
            return t
        reso = t.shape[-1]
        pts = partial.clamp(-0.5, 0.5)
        local = sample_planes(t, pts)  # (P, 3, C)
        per_point = torch.cat([pts.unsqueeze(1).expand(-1, 3, -1), local], dim=-1)
        feats = self.mlp(per_point)
        cell = plane_cell_index(pts, reso)
        pooled, occupied = scatter_max_planes(feats, cell, reso)
        residual = self.proj(pooled.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        residual = torch.where(occupied, residual, torch.zeros_like(residual))
        return t + residual


def point_aggregate(t: torch.Tensor, partial, aggregator: PointAggregator) -> torch.Tensor:
    """Functional wrapper for a single (3, C, H, W) triplane."""
    return aggregator(t, partial)


class HFALayer(nn.Module):
    """One hybrid aggregation layer at a fixed triplane resolution."""

    def __init__(self, channels: int, c_img: int, attn_cfg: AttentionConfig | None = None, point_feat: int = 32):
        super().__init__()
        self.c_img = c_img
        self.points = PointAggregator(channels, point_feat)
        self.attn = VoxelViewAttention(channels, c_img, attn_cfg or AttentionConfig())

    def forward_single(self, t: torch.Tensor, cond: ConditionTensors | None,
                       img_feats: torch.Tensor | None, image_hw) -> torch.Tensor:
        return self.forward(t.unsqueeze(0), [(cond, img_feats, image_hw)]).squeeze(0)

    def _gather_batched(self, reso, dtype, cond_pack):
        """Stack per-element view samples, padding the view axis to the max."""
        b = len(cond_pack)
        with_views = [i for i, (c, f, _) in enumerate(cond_pack) if c is not None and f is not None and c.n_views > 0]
        if not with_views:
            return None, None
        v_max = max(cond_pack[i][0].n_views for i in with_views)
        n = reso**3
        gathered = torch.zeros(b, n, v_max, self.c_img, dtype=dtype)
        mask = torch.zeros(b, n, v_max, dtype=torch.bool)
        coords = grid_coords(reso, dtype=dtype)
        for i in with_views:
            cond, feats, image_hw = cond_pack[i]
            g, m = gather_image_feats(coords, feats, cond, image_hw)
            gathered[i, :, : m.shape[1]] = g
            mask[i, :, : m.shape[1]] = m
        return gathered, mask

    def forward(self, t: torch.Tensor, cond_pack) -> torch.Tensor:
        """t: (B, 3, C, H, W); cond_pack: list of (ConditionTensors | None,
        encoded view features | None, image_hw) per element.

        Voxels are independent, so the per-voxel attention runs batched across
        elements with the view axis padded and masked; elements without any
        valid view pass through unchanged, exactly as in the single-sample
        composition."""
        b, _, c, reso, _ = t.shape
        planes = []
        for i in range(b):
            cond = cond_pack[i][0]
            planes.append(self.points(t[i], None if cond is None else cond.partial))
        tp = torch.stack(planes)
        g = expand(tp)  # (B, C, R, R, R)
        gathered, mask = self._gather_batched(reso, t.dtype, cond_pack)
        if gathered is not None:
            flat = g.permute(0, 2, 3, 4, 1).reshape(-1, c)
            out = self.attn(flat, gathered.reshape(flat.shape[0], -1, self.c_img),
                            mask.reshape(flat.shape[0], -1))
            g = out.reshape(b, reso, reso, reso, c).permute(0, 4, 1, 2, 3)
        return t + flatten(g)


class DirectProjectionLayer(nn.Module):
    """Ablation baseline: plane pixels project straight into the views.

    Each triplane pixel becomes a 3D point with the dropped coordinate at the
    cube mid-plane; no volumetric grid is built. Point aggregation is shared
    with the hybrid layer, only the image pathway differs.
    """

    def __init__(self, channels: int, c_img: int, attn_cfg: AttentionConfig | None = None, point_feat: int = 32):
        super().__init__()
        self.c_img = c_img
        self.points = PointAggregator(channels, point_feat)
        self.attn = VoxelViewAttention(channels, c_img, attn_cfg or AttentionConfig())

    @staticmethod
    def plane_pixel_coords(reso: int, dtype=torch.float32) -> torch.Tensor:
        ax = torch.arange(reso, dtype=dtype) / (reso - 1) - 0.5
        a, b = torch.meshgrid(ax, ax, indexing="ij")
        zeros = torch.zeros_like(a)
        xy = torch.stack([a, b, zeros], dim=-1)
        xz = torch.stack([a, zeros, b], dim=-1)
        yz = torch.stack([zeros, a, b], dim=-1)
        return torch.stack([xy, xz, yz]).reshape(-1, 3)  # (3*R*R, 3)

    def forward_single(self, t, cond, img_feats, image_hw):
        return self.forward(t.unsqueeze(0), [(cond, img_feats, image_hw)]).squeeze(0)

    def forward(self, t, cond_pack):
        b, _, c, reso, _ = t.shape
        planes = []
        for i in range(b):
            cond = cond_pack[i][0]
            planes.append(self.points(t[i], None if cond is None else cond.partial))
        tp = torch.stack(planes)
        with_views = [i for i, (cd, f, _) in enumerate(cond_pack) if cd is not None and f is not None and cd.n_views > 0]
        if not with_views:
            return t + tp
        v_max = max(cond_pack[i][0].n_views for i in with_views)
        n = 3 * reso * reso
        gathered = torch.zeros(b, n, v_max, self.c_img, dtype=t.dtype)
        mask = torch.zeros(b, n, v_max, dtype=torch.bool)
        coords = self.plane_pixel_coords(reso, dtype=t.dtype)
        for i in with_views:
            cond, feats, image_hw = cond_pack[i]
            g, m = gather_image_feats(coords, feats, cond, image_hw)
            gathered[i, :, : m.shape[1]] = g
            mask[i, :, : m.shape[1]] = m
        flat = tp.permute(0, 1, 3, 4, 2).reshape(-1, c)
        out = self.attn(flat, gathered.reshape(flat.shape[0], v_max, self.c_img),
                        mask.reshape(flat.shape[0], v_max))
        tp = out.reshape(b, 3, reso, reso, c).permute(0, 1, 4, 2, 3)
        return t + tp
