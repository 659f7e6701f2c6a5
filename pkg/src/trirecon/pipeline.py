"""Bundle-level reconstruction/evaluation plumbing shared by the CLI and tests."""

from __future__ import annotations

import numpy as np
import torch

from .diffusion import EDMParams, EmptySurface
from .diffusion.reconstruct import reconstruct_from_latent, sample_latent, sample_latents
from .geom import augmentation_transform, normalize_to_unit, occupancy, sample_surface
from .hfa import make_condition
from .metrics import ReconRow, chamfer_l2, fscore, miou, sample_mesh_surface
from .seeding import derive_rng, derive_seed
from .synth.observe import ObservationBundle

# detection-noise robustness ranges: yaw degrees, uniform scale, center shift
# as a fraction of the canonical extent
POSE_NOISE_ROT_DEG = 10.0
POSE_NOISE_SCALE = (0.8, 1.1)
POSE_NOISE_SHIFT = 0.10


def perturb_bundle(bundle: ObservationBundle, seed: int) -> ObservationBundle:
    """Simulate an inaccurate detection box: the canonical frame the partial is
    expressed in (and the pose used for image projection) gets a random yaw,
    scale and shift within the robustness ranges."""
    rng = derive_rng(seed, "pose_noise", bundle.bundle_id)
    jitter = augmentation_transform(
        rng.uniform(-POSE_NOISE_ROT_DEG, POSE_NOISE_ROT_DEG),
        rng.uniform(*POSE_NOISE_SCALE),
        rng.uniform(-POSE_NOISE_SHIFT, POSE_NOISE_SHIFT, 3),
    )
    noisy_pose = bundle.pose.compose(jitter)
    partial = jitter.inverse().apply(bundle.partial)
    return ObservationBundle(
        partial=partial,
        images=bundle.images,
        gt_shape=bundle.gt_shape,
        gt_box=bundle.gt_box,
        category=bundle.category,
        pose=noisy_pose,
        bundle_id=bundle.bundle_id,
    )


def gt_surface_points(shape, n_points: int, seed: int) -> np.ndarray:
    spacing = 0.02
    pts, _ = sample_surface(shape, spacing, seed=derive_seed(seed, "gtsurf"))
    while len(pts) < n_points:
        spacing *= 0.6
        pts, _ = sample_surface(shape, spacing, seed=derive_seed(seed, "gtsurf"))
    sel = derive_rng(seed, "gtsel").choice(len(pts), n_points, replace=False)
    return pts[sel]


def bundle_condition(bundle: ObservationBundle, modality: str):
    if modality not in ("pts", "pts+imgs", "imgs"):
        raise ValueError(f"unknown modality {modality!r}")
    return make_condition(
        bundle.partial,
        bundle.images,
        bundle.pose,
        use_partial=modality in ("pts", "pts+imgs"),
        use_images=modality in ("imgs", "pts+imgs"),
    )


def score_bundle(vae, planes: torch.Tensor, bundle: ObservationBundle, seed: int,
                 grid_res: int = 48, n_points: int = 10000, miou_res: int = 48):
    """Score one sampled latent against the bundle's ground truth.

    Both sides are unit-normalized before the metrics. Returns
    (ReconRow, verts, faces); raises EmptySurface when the decoded field never
    crosses the isosurface level."""
    verts, faces = reconstruct_from_latent(vae, planes, grid_res)
    pred_pts = sample_mesh_surface(verts, faces, n_points, seed=derive_seed(seed, "meshpts", bundle.bundle_id))
    gt_pts = gt_surface_points(bundle.gt_shape, n_points, derive_seed(seed, "gt", bundle.bundle_id))
    pred_norm, t_pred = normalize_to_unit(pred_pts)
    gt_norm, t_gt = normalize_to_unit(gt_pts)
    inv_pred = t_pred.inverse()
    inv_gt = t_gt.inverse()

    def pred_occ(q):
        qc = torch.as_tensor(inv_pred.apply(q), dtype=torch.float32).clamp(-0.5, 0.5)
        with torch.no_grad():
            return (torch.sigmoid(vae.decode(planes, qc)) > 0.5).numpy()

    def gt_occ(q):
        return occupancy(bundle.gt_shape, inv_gt.apply(q))

    row = ReconRow(
        miou=miou(pred_occ, gt_occ, grid_res=miou_res),
        chamfer_l2_x1000=chamfer_l2(pred_norm, gt_norm),
        fscore_1pct=fscore(pred_norm, gt_norm),
    )
    return row, verts, faces


def eval_bundle_recon(vae, denoiser, latent_std, params: EDMParams, bundle: ObservationBundle,
                      modality: str = "pts+imgs", grid_res: int = 48, seed: int = 0,
                      n_points: int = 10000, miou_res: int = 48):
    """Reconstruct one bundle and score it; returns (ReconRow, verts, faces)."""
    cond = bundle_condition(bundle, modality)
    planes = sample_latent(
        denoiser, cond, params, latent_std,
        derive_seed(seed, "recon", bundle.bundle_id), vae.cfg.reso, vae.cfg.latent_channels,
    )
    return score_bundle(vae, planes, bundle, seed, grid_res, n_points, miou_res)


def evaluate_split(vae, denoiser, latent_std, params, bundles, modality="pts+imgs", grid_res=48,
                   seed=0, pose_noise=False, n_points=10000, miou_res=48, sample_batch=8,
                   on_result=None):
    """Evaluate a list of bundles; latents are sampled in batches for speed.

    Failed reconstructions are collected, not fatal. Returns
    (rows dict bundle_id -> (category, ReconRow), failures, per-category means).
    """
    work = [perturb_bundle(b, seed) if pose_noise else b for b in bundles]
    rows, failures = {}, []
    for lo in range(0, len(work), sample_batch):
        chunk = work[lo : lo + sample_batch]
        conds = [bundle_condition(b, modality) for b in chunk]
        seeds = [derive_seed(seed, "recon", b.bundle_id) for b in chunk]
        planes = sample_latents(denoiser, conds, params, latent_std, seeds,
                                vae.cfg.reso, vae.cfg.latent_channels)
        for b, p in zip(chunk, planes):
            try:
                row, verts, faces = score_bundle(vae, p, b, seed, grid_res, n_points, miou_res)
            except EmptySurface as exc:
                failures.append((b.bundle_id, str(exc)))
                continue
            rows[b.bundle_id] = (b.category, row)
            if on_result:
                on_result(b.bundle_id, b.category, row, verts, faces)
    per_cat = {}
    for cat in sorted({c for c, _ in rows.values()}):
        cat_rows = [r for c, r in rows.values() if c == cat]
        per_cat[cat] = ReconRow(
            miou=float(np.mean([r.miou for r in cat_rows])),
            chamfer_l2_x1000=float(np.mean([r.chamfer_l2_x1000 for r in cat_rows])),
            fscore_1pct=float(np.mean([r.fscore_1pct for r in cat_rows])),
        )
    return rows, failures, per_cat
