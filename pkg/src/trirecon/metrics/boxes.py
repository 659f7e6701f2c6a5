"""Oriented-box IoU (exact, via polygon clipping) and mAP/mAR@IoU evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom.polygon import clip_convex, polygon_area


@dataclass(frozen=True)
class OrientedBox:
    """Yaw-rotated 3D box: center (3,), size (l, w, h), yaw about +z in (-pi, pi]."""

    center: np.ndarray
    size: np.ndarray
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64).reshape(3))
        yaw = float(self.yaw)
        # wrap into (-pi, pi]
        yaw = yaw - 2 * np.pi * np.floor((yaw + np.pi) / (2 * np.pi))
        if yaw <= -np.pi:
            yaw += 2 * np.pi
        object.__setattr__(self, "yaw", yaw)
        if not np.all(self.size > 0):
            raise ValueError("box sizes must be positive")

    def footprint(self) -> np.ndarray:
        """CCW corners of the xy footprint, shape (4, 2)."""
        l, w = self.size[0], self.size[1]
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        local = np.array([[-l, -w], [l, -w], [l, w], [-l, w]]) / 2.0
        rot = local @ np.array([[c, s], [-s, c]])
        return rot + self.center[:2]

    def corners(self) -> np.ndarray:
        """All 8 corners, shape (8, 3)."""
        fp = self.footprint()
        z0 = self.center[2] - self.size[2] / 2
        z1 = self.center[2] + self.size[2] / 2
        return np.vstack([np.column_stack([fp, np.full(4, z0)]), np.column_stack([fp, np.full(4, z1)])])

    def volume(self) -> float:
        return float(np.prod(self.size))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership for (N,3) world points."""
        p = np.asarray(points, dtype=np.float64) - self.center
        c, s = np.cos(-self.yaw), np.sin(-self.yaw)
        x = c * p[:, 0] - s * p[:, 1]
        y = s * p[:, 0] + c * p[:, 1]
        h = self.size / 2.0
        return (np.abs(x) <= h[0]) & (np.abs(y) <= h[1]) & (np.abs(p[:, 2]) <= h[2])

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "size": self.size.tolist(), "yaw": self.yaw}

    @staticmethod
    def from_dict(d: dict) -> "OrientedBox":
        return OrientedBox(np.array(d["center"]), np.array(d["size"]), d["yaw"])


def oriented_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Exact IoU of two yaw boxes: clipped footprint area x z-overlap / union."""
    inter_poly = clip_convex(a.footprint(), b.footprint())
    inter_area = polygon_area(inter_poly)
    if inter_area <= 0:
        return 0.0
    z_lo = max(a.center[2] - a.size[2] / 2, b.center[2] - b.size[2] / 2)
    z_hi = min(a.center[2] + a.size[2] / 2, b.center[2] + b.size[2] / 2)
    dz = max(0.0, z_hi - z_lo)
    inter = inter_area * dz
    union = a.volume() + b.volume() - inter
    return float(inter / union) if union > 0 else 0.0


def oriented_iou_montecarlo(a: OrientedBox, b: OrientedBox, n: int = 1_000_000, seed: int = 0) -> float:
    """Monte Carlo IoU oracle: sample the union's AABB, count memberships."""
    corners = np.vstack([a.corners(), b.corners()])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n, 3))
    in_a = a.contains(pts)
    in_b = b.contains(pts)
    union = (in_a | in_b).sum()
    if union == 0:
        return 0.0
    return float((in_a & in_b).sum() / union)


@dataclass
class DetectionReport:
    per_class: dict  # class -> (ap, ar, n_gt)
    map50: float
    mar50: float


def _average_precision(scores, matched, n_gt):
    """All-point interpolated AP from per-prediction (score, is_tp) pairs."""
    if n_gt == 0:
        return 0.0, 0.0
    order = np.argsort(-np.asarray(scores), kind="stable")
    tp = np.asarray(matched, dtype=np.float64)[order]
    fp = 1.0 - tp
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1e-12)
    # monotone envelope, then integrate over recall
    mrec = np.concatenate([[0.0], recall, [recall[-1] if len(recall) else 0.0]])
    mpre = np.concatenate([[1.0], precision, [0.0]])
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    ap = float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))
    ar = float(cum_tp[-1] / n_gt) if len(cum_tp) else 0.0
    return ap, ar


def map_mar(predictions, ground_truths, iou_thresh: float = 0.5) -> DetectionReport:
    """mAP/mAR at one IoU threshold over classes present in the ground truth.

    predictions: list per scene of (OrientedBox, score, class_id);
    ground_truths: list per scene of (OrientedBox, class_id).
    Matching is greedy by descending score; each GT matches at most once.
    """
    if len(predictions) != len(ground_truths):
        raise ValueError("predictions and ground_truths must align per scene")
    classes = sorted({c for gts in ground_truths for _, c in gts})
    per_class = {}
    for cls in classes:
        scores, matched = [], []
        n_gt = 0
        for preds, gts in zip(predictions, ground_truths):
            gt_boxes = [b for b, c in gts if c == cls]
            n_gt += len(gt_boxes)
            taken = [False] * len(gt_boxes)
            cand = sorted([(s, b) for b, s, c in preds if c == cls], key=lambda x: -x[0])
            for s, box in cand:
                best_iou, best_j = 0.0, -1
                for j, g in enumerate(gt_boxes):
                    if taken[j]:
                        continue
                    v = oriented_iou(box, g)
                    if v > best_iou:
                        best_iou, best_j = v, j
                if best_iou >= iou_thresh and best_j >= 0:
                    taken[best_j] = True
                    matched.append(1.0)
                else:
                    matched.append(0.0)
                scores.append(s)
        ap, ar = _average_precision(scores, matched, n_gt)
        per_class[cls] = (ap, ar, n_gt)
    if not per_class:
        return DetectionReport({}, 0.0, 0.0)
    map50 = float(np.mean([v[0] for v in per_class.values()]))
    mar50 = float(np.mean([v[1] for v in per_class.values()]))
    return DetectionReport(per_class, map50, mar50)
