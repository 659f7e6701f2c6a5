"""Triplane network building blocks.

Tensors are (B, 3, C, H, W) with plane order (XY, XZ, YZ); plane axis 0 maps to
the first kept coordinate (see geom.triplane). The cross-plane convolution
stacks each plane with axis-pooled broadcasts of the other two planes before a
shared 2D convolution, so information flows between planes at every layer.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..geom.triplane import project_triplane_torch


def cross_plane_stack(t: torch.Tensor) -> torch.Tensor:
    """(B, 3, C, H, W) -> (B, 3, 3C, H, W): [own; pooled broadcasts of others].

    With plane axes XY=(x,y), XZ=(x,z), YZ=(y,z), each plane receives the mean
    over the other planes' non-shared axis, broadcast along its own grid. E.g.
    XY gets mean_z XZ (a function of x) and mean_z YZ (a function of y).
    """
    xy, xz, yz = t[:, 0], t[:, 1], t[:, 2]
    h, w = t.shape[-2], t.shape[-1]
    fx_from_xz = xz.mean(dim=3, keepdim=True)  # (B,C,H,1), varies along x
    fy_from_yz = yz.mean(dim=3, keepdim=True)  # (B,C,H,1), varies along y
    fx_from_xy = xy.mean(dim=3, keepdim=True)  # (B,C,H,1), varies along x
    fy_from_xy = xy.mean(dim=2, keepdim=True)  # (B,C,1,W), varies along y
    fz_from_xz = xz.mean(dim=2, keepdim=True)  # (B,C,1,W), varies along z
    fz_from_yz = yz.mean(dim=2, keepdim=True)  # (B,C,1,W), varies along z
    sxy = torch.cat(
        [xy, fx_from_xz.expand(-1, -1, -1, w), fy_from_yz.transpose(2, 3).expand(-1, -1, h, -1)], dim=1
    )
    sxz = torch.cat(
        [xz, fx_from_xy.expand(-1, -1, -1, w), fz_from_yz.expand(-1, -1, h, -1)], dim=1
    )
    syz = torch.cat(
        [yz, fy_from_xy.transpose(2, 3).expand(-1, -1, -1, w), fz_from_xz.expand(-1, -1, h, -1)], dim=1
    )
    return torch.stack([sxy, sxz, syz], dim=1)


class TriplaneConv(nn.Module):
    """Cross-plane-aware convolution: shared Conv2d over the 3C-channel stacks."""

    def __init__(self, cin, cout, kernel=3, zero_init=False):
        super().__init__()
        self.conv = nn.Conv2d(3 * cin, cout, kernel, padding=kernel // 2)
        if zero_init:
            nn.init.zeros_(self.conv.weight)
            nn.init.zeros_(self.conv.bias)

    def forward(self, t):
        b = t.shape[0]
        s = cross_plane_stack(t)
        out = self.conv(s.reshape(b * 3, *s.shape[2:]))
        return out.reshape(b, 3, *out.shape[1:])


def aware_conv3d(t: torch.Tensor, conv: TriplaneConv) -> torch.Tensor:
    """Functional form of the cross-plane convolution on a (3, C, H, W) triplane."""
    return conv(t.unsqueeze(0)).squeeze(0)


def _norm(c):
    return nn.GroupNorm(min(8, c), c)


class TriplaneResBlock(nn.Module):
    def __init__(self, cin, cout, emb_dim=None):
        super().__init__()
        self.norm1 = _norm(cin)
        self.conv1 = TriplaneConv(cin, cout)
        self.norm2 = _norm(cout)
        self.conv2 = TriplaneConv(cout, cout, zero_init=True)
        self.emb_proj = nn.Linear(emb_dim, 2 * cout) if emb_dim else None
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else None

    def _per_plane(self, mod, t):
        b = t.shape[0]
        out = mod(t.reshape(b * 3, *t.shape[2:]))
        return out.reshape(b, 3, *out.shape[1:])

    def forward(self, t, emb=None):
        h = self._per_plane(self.norm1, t)
        h = self.conv1(F.silu(h))
        if self.emb_proj is not None and emb is not None:
            scale, shift = self.emb_proj(emb)[:, None, :, None, None].chunk(2, dim=2)
            h = h * (1 + scale) + shift
        h = self._per_plane(self.norm2, h)
        h = self.conv2(F.silu(h))
        skip = t if self.skip is None else self._per_plane(self.skip, t)
        return skip + h


def _pool(t):
    b = t.shape[0]
    out = F.avg_pool2d(t.reshape(b * 3, *t.shape[2:]), 2)
    return out.reshape(b, 3, *out.shape[1:])


def _unpool(t):
    b = t.shape[0]
    out = F.interpolate(t.reshape(b * 3, *t.shape[2:]), scale_factor=2, mode="nearest")
    return out.reshape(b, 3, *out.shape[1:])


class TriplaneUNet(nn.Module):
    """U-shaped triplane refiner with optional per-resolution condition layers.

    `cond_layers`, when given, holds depth+1 modules called as layer(t, cond)
    after the residual block at each resolution on the downsampling path.
    """

    def __init__(self, cin, cout, base=16, depth=2, emb_dim=None, cond_layers=None):
        super().__init__()
        self.depth = depth
        widths = [base * min(2**d, 4) for d in range(depth + 1)]
        self.lift = nn.Conv2d(cin, base, 1)
        self.down = nn.ModuleList(
            [TriplaneResBlock(widths[max(d - 1, 0)] if d else base, widths[d], emb_dim) for d in range(depth + 1)]
        )
        self.cond_layers = cond_layers if cond_layers is not None else nn.ModuleList()
        self.up = nn.ModuleList(
            [TriplaneResBlock(widths[d] + widths[d + 1], widths[d], emb_dim) for d in reversed(range(depth))]
        )
        self.out_norm = _norm(base)
        self.out_conv = nn.Conv2d(base, cout, 1)

    def _per_plane(self, mod, t):
        b = t.shape[0]
        out = mod(t.reshape(b * 3, *t.shape[2:]))
        return out.reshape(b, 3, *out.shape[1:])

    def forward(self, t, emb=None, cond=None):
        h = self._per_plane(self.lift, t)
        skips = []
        for d in range(self.depth + 1):
            h = self.down[d](h, emb)
            if len(self.cond_layers) > d and cond is not None:
                h = self.cond_layers[d](h, cond)
            if d < self.depth:
                skips.append(h)
                h = _pool(h)
        for i, d in enumerate(reversed(range(self.depth))):
            h = _unpool(h)
            h = torch.cat([h, skips[d]], dim=2)
            h = self.up[i](h, emb)
        h = self._per_plane(self.out_norm, h)
        return self._per_plane(self.out_conv, F.silu(h))


def plane_cell_index(points: torch.Tensor, reso: int) -> torch.Tensor:
    """Containing-cell flat index per plane. points (K,3) -> (K,3) long.

    Cells bin uv in [0,1): index = min(floor(u*reso), reso-1), flat = iu*reso+iv.
    """
    uv = project_triplane_torch(points)  # (K, 3, 2)
    idx = (uv * reso).floor().long().clamp(0, reso - 1)
    return idx[..., 0] * reso + idx[..., 1]


def scatter_max_planes(feats: torch.Tensor, cell_idx: torch.Tensor, reso: int):
    """Max-pool per-point features into plane cells.

    feats: (K, 3, F) per-point per-plane features; cell_idx: (K, 3) flat cells.
    Returns (pooled (3, F, reso, reso), occupied (3, 1, reso, reso) bool).
    Empty cells hold 0 in `pooled`. Exactly permutation invariant.
    """
    k, _, f = feats.shape
    pooled_planes = []
    occ_planes = []
    for p in range(3):
        target = feats.new_full((reso * reso, f), float("-inf"))
        idx = cell_idx[:, p].unsqueeze(-1).expand(-1, f)
        target = target.scatter_reduce(0, idx, feats[:, p, :], reduce="amax", include_self=True)
        count = torch.bincount(cell_idx[:, p], minlength=reso * reso)
        occupied = count > 0
        target = torch.where(occupied.unsqueeze(-1), target, target.new_zeros(()))
        pooled_planes.append(target.T.reshape(f, reso, reso))
        occ_planes.append(occupied.reshape(1, reso, reso))
    return torch.stack(pooled_planes), torch.stack(occ_planes)


class PointPlaneEncoder(nn.Module):
    """Shared per-point MLP, max-pooled into plane cells; empty cells get a
    learned embedding (or stay zero when `empty_embedding=False`)."""

    def __init__(self, in_dim, feat_dim, empty_embedding=True):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, feat_dim), nn.SiLU(), nn.Linear(feat_dim, feat_dim)
        )
        self.empty = nn.Parameter(torch.zeros(feat_dim)) if empty_embedding else None

    def forward(self, points: torch.Tensor, reso: int, extra=None):
        """points (K,3) -> (3, F, reso, reso). `extra`: optional (K, 3, E) per-plane feats."""
        base = self.mlp_input(points, extra)
        feats = self.mlp(base)  # (K, 3, F)
        cell = plane_cell_index(points, reso)
        pooled, occupied = scatter_max_planes(feats, cell, reso)
        if self.empty is not None:
            fill = self.empty[None, :, None, None]
            pooled = torch.where(occupied, pooled, fill)
        return pooled, occupied

    @staticmethod
    def mlp_input(points, extra):
        per_plane = points.unsqueeze(1).expand(-1, 3, -1)  # coords shared across planes
        if extra is not None:
            per_plane = torch.cat([per_plane, extra], dim=-1)
        return per_plane
