"""Reconstruction metrics: volumetric mIoU, Chamfer-L2 (x1000), F-score@tau.

Conventions (applied uniformly so relative comparisons are meaningful):
  * both sides are normalized to [-0.5, 0.5] on the longest axis beforehand;
  * Chamfer is the symmetric mean of squared nearest-neighbor distances with a
    1/2 factor, reported x1000;
  * IoU of occupancy fields is evaluated on a fixed lattice of cell centers
    (default 64^3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


def grid_centers(res: int) -> np.ndarray:
    """Cell centers of a res^3 lattice over [-0.5, 0.5]^3, shape (res^3, 3)."""
    ax = (np.arange(res) + 0.5) / res - 0.5
    g = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def miou(pred_occ_fn, gt_occ_fn, grid_res: int = 64) -> float:
    """IoU of two boolean occupancy fields on a grid_res^3 lattice.

    Both callables take (N,3) points and return boolean arrays. Returns 1.0
    when both fields are empty on the lattice.
    """
    q = grid_centers(grid_res)
    a = np.asarray(pred_occ_fn(q), dtype=bool)
    b = np.asarray(gt_occ_fn(q), dtype=bool)
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def chamfer_l2(a: np.ndarray, b: np.ndarray) -> float:
    """0.5*(mean_a min_b ||a-b||^2 + mean_b min_a ||b-a||^2), reported x1000."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer_l2 requires non-empty clouds")
    d_ab = cKDTree(b).query(a, k=1)[0]
    d_ba = cKDTree(a).query(b, k=1)[0]
    raw = 0.5 * (np.mean(d_ab**2) + np.mean(d_ba**2))
    return float(raw * 1000.0)


def chamfer_l2_bruteforce(a: np.ndarray, b: np.ndarray) -> float:
    """O(N^2) reference used to validate the KD-tree implementation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer_l2 requires non-empty clouds")
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    raw = 0.5 * (d2.min(axis=1).mean() + d2.min(axis=0).mean())
    return float(raw * 1000.0)


def fscore(a: np.ndarray, b: np.ndarray, tau: float = 0.01) -> float:
    """F-score at distance threshold tau (1% of the unit extent by default)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("fscore requires non-empty clouds")
    d_ab = cKDTree(b).query(a, k=1)[0]
    d_ba = cKDTree(a).query(b, k=1)[0]
    precision = float((d_ab <= tau).mean())
    recall = float((d_ba <= tau).mean())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class ReconRow:
    """One evaluation row in the `mIoU / Chamfer L2 / F-score` convention."""

    miou: float
    chamfer_l2_x1000: float
    fscore_1pct: float

    def cell(self) -> str:
        return f"{self.miou * 100:.1f} / {self.chamfer_l2_x1000:.2f} / {self.fscore_1pct * 100:.1f}"


def sample_mesh_surface(vertices: np.ndarray, faces: np.ndarray, n_points: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform sampling of a triangle mesh surface."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if len(f) == 0:
        raise ValueError("empty mesh")
    tri = v[f]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1)
    total = area.sum()
    if total <= 0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(f), size=n_points, p=area / total)
    r1 = np.sqrt(rng.random(n_points))
    r2 = rng.random(n_points)
    w0 = 1 - r1
    w1 = r1 * (1 - r2)
    w2 = r1 * r2
    t = tri[idx]
    return w0[:, None] * t[:, 0] + w1[:, None] * t[:, 1] + w2[:, None] * t[:, 2]


def eval_recon(pred_points: np.ndarray, pred_occ_fn, gt_points: np.ndarray, gt_occ_fn,
               grid_res: int = 64, tau: float = 0.01) -> ReconRow:
    """All three metrics between a prediction and ground truth.

    Callers are responsible for normalizing both sides (points and the frames
    the occupancy callables expect) to [-0.5, 0.5] first.
    """
    return ReconRow(
        miou=miou(pred_occ_fn, gt_occ_fn, grid_res),
        chamfer_l2_x1000=chamfer_l2(pred_points, gt_points),
        fscore_1pct=fscore(pred_points, gt_points, tau),
    )
