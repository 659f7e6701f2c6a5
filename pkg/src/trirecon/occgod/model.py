"""Toy voxel detector with a switchable occupancy head.

Backbone downsamples the input feature grid x4; the occupancy head predicts
per-voxel logits back at label resolution and exposes intermediate features
that can be concatenated into the box head (the ablation toggle). Boxes are
regressed anchor-free per backbone voxel with a (sin, cos) yaw pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..metrics.boxes import OrientedBox, oriented_iou
from .labels import GridSpec

STRIDE = 4


@dataclass
class DetectorConfig:
    c_base: int = 16
    c_occ: int = 8
    c_head: int = 16
    n_classes: int = 6
    lambda_occ: float = 1.0
    lr: float = 1e-3
    batch_scenes: int = 2
    score_thresh: float = 0.3
    nms_iou: float = 0.25

    def to_dict(self):
        return dict(self.__dict__)

    @staticmethod
    def from_dict(d):
        return DetectorConfig(**d)


class VoxelBackbone(nn.Module):
    """3D conv encoder-decoder; output spatial dims = input dims / 4."""

    def __init__(self, c_in: int = 4, c_base: int = 16):
        super().__init__()
        c = c_base
        self.enc1 = nn.Conv3d(c_in, c, 3, padding=1)
        self.enc2 = nn.Conv3d(c, 2 * c, 3, padding=1)
        self.enc3 = nn.Conv3d(2 * c, 2 * c, 3, padding=1)
        self.bott = nn.Conv3d(2 * c, 2 * c, 3, padding=1)
        self.fuse = nn.Conv3d(4 * c, 2 * c, 3, padding=1)
        self.out_channels = 2 * c
        # receptive-field composition over the layer ladder (k, s) below
        r, j = 1, 1
        for k, s in [(3, 1), (2, 2), (3, 1), (2, 2), (3, 1), (2, 2), (3, 1), (1, 1), (3, 1)]:
            r += (k - 1) * j
            j *= s
        self.receptive_radius = (r - 1) // 2 + 1  # input voxels, conservative
        self.output_stride = STRIDE

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if any(d % STRIDE for d in x.shape[-3:]):
            raise ValueError("input dims must be divisible by 4")
        h1 = F.avg_pool3d(F.silu(self.enc1(x)), 2)
        h2 = F.avg_pool3d(F.silu(self.enc2(h1)), 2)
        h3 = F.silu(self.enc3(h2))  # /4 resolution
        deep = F.silu(self.bott(F.avg_pool3d(h3, 2, ceil_mode=True)))  # /8
        up = F.interpolate(deep, size=h3.shape[-3:], mode="nearest")
        return self.fuse(torch.cat([h3, up], dim=1))


class OccupancyHead(nn.Module):
    """Backbone features -> (logits at label resolution, features at /4)."""

    def __init__(self, c_in: int, c_occ: int = 8):
        super().__init__()
        self.feat = nn.Conv3d(c_in, c_occ, 3, padding=1)
        self.logit = nn.Conv3d(c_occ, 1, 1)
        self.out_channels = c_occ

    def forward(self, feats: torch.Tensor):
        occ_feats = F.silu(self.feat(feats))
        coarse = self.logit(occ_feats)
        logits = F.interpolate(coarse, scale_factor=STRIDE, mode="trilinear", align_corners=False)
        return logits.squeeze(1), occ_feats


def occ_bce_loss(logits: torch.Tensor, labels: torch.Tensor, w_pos: float | None = None) -> torch.Tensor:
    """Mean BCE with positive-class weight (default free/occupied ratio in [1,100])."""
    if logits.shape != labels.shape:
        raise ValueError("logits and labels must share a shape")
    labels = labels.to(logits.dtype)
    if w_pos is None:
        pos = float(labels.sum())
        neg = labels.numel() - pos
        w_pos = float(np.clip(neg / max(pos, 1.0), 1.0, 100.0))
    per = w_pos * labels * F.softplus(-logits) + (1.0 - labels) * F.softplus(logits)
    return per.mean()


class DetectionHead(nn.Module):
    """Anchor-free per-voxel box regression with optional occupancy features.

    Outputs per voxel: center offset (3, in head-stride units), log-size (3,
    log meters), yaw pair (sin, cos), objectness logit, class logits.
    """

    def __init__(self, c_in: int, cfg: DetectorConfig, use_occ_features: bool):
        super().__init__()
        c = c_in + (cfg.c_occ if use_occ_features else 0)
        self.use_occ_features = use_occ_features
        self.trunk = nn.Sequential(
            nn.Conv3d(c, cfg.c_head, 3, padding=1), nn.SiLU(), nn.Conv3d(cfg.c_head, cfg.c_head, 3, padding=1), nn.SiLU()
        )
        self.reg = nn.Conv3d(cfg.c_head, 8, 1)
        self.obj = nn.Conv3d(cfg.c_head, 1, 1)
        self.cls = nn.Conv3d(cfg.c_head, cfg.n_classes, 1)

    def forward(self, feats: torch.Tensor, occ_feats: torch.Tensor | None = None):
        if self.use_occ_features:
            if occ_feats is None:
                raise ValueError("head built with occupancy features; none supplied")
            feats = torch.cat([feats, occ_feats], dim=1)
        h = self.trunk(feats)
        return {"reg": self.reg(h), "obj": self.obj(h).squeeze(1), "cls": self.cls(h)}


class OccGuidedDetector(nn.Module):
    def __init__(self, cfg: DetectorConfig, use_occ_head: bool):
        super().__init__()
        self.cfg = cfg
        self.use_occ_head = use_occ_head
        self.backbone = VoxelBackbone(4, cfg.c_base)
        self.occ_head = OccupancyHead(self.backbone.out_channels, cfg.c_occ) if use_occ_head else None
        self.det_head = DetectionHead(self.backbone.out_channels, cfg, use_occ_features=use_occ_head)

    def forward(self, grid: torch.Tensor):
        """grid: (B, 4, nx, ny, nz). Returns dict of head outputs."""
        feats = self.backbone(grid)
        occ_logits = occ_feats = None
        if self.occ_head is not None:
            occ_logits, occ_feats = self.occ_head(feats)
        out = self.det_head(feats, occ_feats)
        out["occ"] = occ_logits
        return out


def head_grid_centers(spec: GridSpec) -> np.ndarray:
    """World centers of backbone voxels (stride-4 blocks), (N, 3)."""
    dims = tuple(d // STRIDE for d in spec.dims)
    ax = [spec.origin[i] + (np.arange(dims[i]) + 0.5) * spec.voxel_size * STRIDE for i in range(3)]
    g = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def encode_box(box: OrientedBox, voxel_center: np.ndarray, stride_m: float) -> np.ndarray:
    """Regression target (8,): offset/stride, log-size, (sin, cos) yaw."""
    off = (box.center - voxel_center) / stride_m
    return np.concatenate([off, np.log(box.size), [np.sin(box.yaw), np.cos(box.yaw)]])


def decode_box(reg: np.ndarray, voxel_center: np.ndarray, stride_m: float) -> OrientedBox:
    """Inverse of encode_box; the yaw pair is normalized before atan2."""
    center = voxel_center + reg[:3] * stride_m
    size = np.exp(reg[3:6])
    s, c = reg[6], reg[7]
    n = np.hypot(s, c)
    if n > 0:
        s, c = s / n, c / n
    return OrientedBox(center, size, float(np.arctan2(s, c)))


def assign_targets(boxes, class_ids, spec: GridSpec):
    """Per head voxel: positive mask, box index, class. Each GT claims voxels
    whose centers lie inside its inner-50% extents; unclaimed GTs fall back to
    the nearest voxel center; contested voxels go to the nearest box center."""
    centers = head_grid_centers(spec)
    n = len(centers)
    pos = np.zeros(n, dtype=bool)
    box_idx = np.full(n, -1, dtype=np.int64)
    best_d = np.full(n, np.inf)
    for bi, box in enumerate(boxes):
        inner = OrientedBox(box.center, box.size * 0.5, box.yaw)
        claimed = inner.contains(centers)
        if not claimed.any():
            claimed = np.zeros(n, dtype=bool)
            claimed[np.argmin(np.linalg.norm(centers - box.center, axis=1))] = True
        d = np.linalg.norm(centers - box.center, axis=1)
        take = claimed & (d < best_d)
        pos |= take
        box_idx[take] = bi
        best_d[take] = d[take]
    targets = np.zeros((n, 8))
    cls = np.zeros(n, dtype=np.int64)
    stride_m = spec.voxel_size * STRIDE
    for vi in np.nonzero(pos)[0]:
        targets[vi] = encode_box(boxes[box_idx[vi]], centers[vi], stride_m)
        cls[vi] = class_ids[box_idx[vi]]
    return pos, targets, cls


def decode_detections(out: dict, spec: GridSpec, score_thresh: float = 0.3, nms_iou: float = 0.25,
                      max_dets: int = 64):
    """Threshold objectness, decode boxes, greedy per-class NMS by score."""
    if not (0 < score_thresh < 1 and 0 < nms_iou < 1):
        raise ValueError("thresholds must lie in (0, 1)")
    obj = torch.sigmoid(out["obj"]).reshape(-1).detach().numpy()
    reg = out["reg"].squeeze(0).reshape(8, -1).T.detach().numpy()
    n_classes = out["cls"].shape[1]
    cls = out["cls"].squeeze(0).reshape(n_classes, -1).T.detach().numpy()
    key = (tuple(spec.origin), spec.voxel_size, spec.dims)
    centers = decode_detections.centers_cache.get(key)
    if centers is None:
        centers = head_grid_centers(spec)
        decode_detections.centers_cache[key] = centers
    stride_m = spec.voxel_size * STRIDE
    keep = np.nonzero(obj >= score_thresh)[0]
    keep = keep[np.argsort(-obj[keep], kind="stable")][: 4 * max_dets]
    cands = []
    for vi in keep:
        box = decode_box(reg[vi], centers[vi], stride_m)
        cands.append((box, float(obj[vi]), int(cls[vi].argmax())))
    result = []
    for c in sorted(set(c for _, _, c in cands)):
        pool = [x for x in cands if x[2] == c]
        pool.sort(key=lambda x: -x[1])
        chosen = []
        for box, score, cid in pool:
            if all(oriented_iou(box, kept[0]) < nms_iou for kept in chosen):
                chosen.append((box, score, cid))
        result.extend(chosen)
    result.sort(key=lambda x: -x[1])
    return result[:max_dets]


decode_detections.centers_cache = {}
