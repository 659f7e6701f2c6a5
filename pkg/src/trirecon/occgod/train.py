"""Joint detector training: box losses plus optional occupancy supervision."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..checkpoint import load_checkpoint, save_checkpoint, write_loss_curve
from ..seeding import derive_rng, derive_seed
from ..vae.train import TrainingDiverged
from .labels import GridSpec, SceneOccupancyGrid, voxelize_scan
from .model import DetectorConfig, OccGuidedDetector, assign_targets, decode_detections


class DetectionScene:
    """One training example: voxelized scan + GT boxes (+ occupancy labels)."""

    def __init__(self, scan_points, boxes, class_ids, spec: GridSpec, occ: SceneOccupancyGrid | None):
        self.features = torch.as_tensor(voxelize_scan(scan_points, spec))
        self.boxes = list(boxes)
        self.class_ids = list(class_ids)
        self.spec = spec
        self.occ = None if occ is None else torch.as_tensor(occ.occupied.astype(np.float32))
        pos, targets, cls = assign_targets(self.boxes, self.class_ids, spec)
        self.pos = torch.as_tensor(pos)
        self.targets = torch.as_tensor(targets, dtype=torch.float32)
        self.cls = torch.as_tensor(cls)


def detection_losses(out: dict, scene: DetectionScene, cfg: DetectorConfig):
    """(total, parts dict). Box terms: objectness BCE, class CE, smooth-L1 on
    center/size, L2 on the yaw pair; plus weighted occupancy BCE when enabled."""
    from .model import occ_bce_loss

    obj_logits = out["obj"].reshape(-1)
    pos = scene.pos
    n_pos = int(pos.sum())
    pos_weight = torch.tensor(min(max((len(pos) - n_pos) / max(n_pos, 1), 1.0), 100.0))
    obj_loss = F.binary_cross_entropy_with_logits(obj_logits, pos.float(), pos_weight=pos_weight)
    parts = {"obj": float(obj_loss.detach())}
    total = obj_loss
    if n_pos:
        reg = out["reg"].squeeze(0).reshape(8, -1).T[pos]
        tgt = scene.targets[pos]
        center_size = F.smooth_l1_loss(reg[:, :6], tgt[:, :6])
        yaw = (reg[:, 6:] - tgt[:, 6:]).square().mean()
        n_classes = out["cls"].shape[1]
        cls_logits = out["cls"].squeeze(0).reshape(n_classes, -1).T[pos]
        cls_loss = F.cross_entropy(cls_logits, scene.cls[pos])
        total = total + center_size + yaw + cls_loss
        parts.update(center_size=float(center_size.detach()), yaw=float(yaw.detach()),
                     cls=float(cls_loss.detach()))
    if out.get("occ") is not None and scene.occ is not None:
        occ = cfg.lambda_occ * occ_bce_loss(out["occ"].squeeze(0), scene.occ)
        total = total + occ
        parts["occ"] = float(occ.detach())
    parts["total"] = float(total.detach())
    return total, parts


def train_detector(scenes, cfg: DetectorConfig, use_occ_head: bool, seed: int, steps: int,
                   out_path=None, curve_path=None, log_every=50):
    """Returns (model, curve). Scenes: list of DetectionScene."""
    if not scenes:
        raise ValueError("empty scene set")
    torch.manual_seed(derive_seed(seed, "det_init") % 2**63)
    model = OccGuidedDetector(cfg, use_occ_head)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    curve = []
    for step in range(steps):
        rng = derive_rng(seed, "det_step", step)
        idx = rng.integers(len(scenes), size=min(cfg.batch_scenes, len(scenes)))
        opt.zero_grad()
        tot = 0.0
        for bi in idx:
            scene = scenes[int(bi)]
            out = model(scene.features.unsqueeze(0))
            loss, parts = detection_losses(out, scene, cfg)
            (loss / len(idx)).backward()
            tot += float(loss.detach()) / len(idx)
        if not np.isfinite(tot):
            raise TrainingDiverged(f"detector loss became non-finite at step {step}")
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            curve.append((step, tot))
    if curve_path:
        write_loss_curve(curve_path, curve, ["step", "total"])
    if out_path:
        save_checkpoint(
            out_path,
            "detector",
            {"detector": cfg.to_dict(), "use_occ_head": use_occ_head},
            steps,
            {"model": model.state_dict()},
            rng={"master_seed": int(seed), "next_step": int(steps)},
        )
    return model, curve


def load_detector(path) -> OccGuidedDetector:
    header, payload = load_checkpoint(path, expect_kind="detector")
    model = OccGuidedDetector(DetectorConfig.from_dict(header["config"]["detector"]), header["config"]["use_occ_head"])
    model.load_state_dict(payload["model"])
    model.eval()
    return model


def evaluate_detector(model: OccGuidedDetector, scenes, iou_thresh: float = 0.5):
    """mAP/mAR over DetectionScene list using the shared metric stack."""
    from ..metrics.boxes import map_mar

    preds, gts = [], []
    with torch.no_grad():
        for scene in scenes:
            out = model(scene.features.unsqueeze(0))
            preds.append(decode_detections(out, scene.spec, model.cfg.score_thresh, model.cfg.nms_iou))
            gts.append(list(zip(scene.boxes, scene.class_ids)))
    return map_mar(preds, gts, iou_thresh)
