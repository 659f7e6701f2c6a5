"""Dataset synthesis: bundles, scene scans, occupancy labels, manifest, splits.

Everything derives from one master seed; regenerating with the same seed and
config is bit-identical (timestamps live only in the separate run log).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..geom import CameraModel, RigidScaleTransform, load_ply, look_at, save_ply
from ..metrics.boxes import OrientedBox
from ..occgod.labels import GridSpec, gen_occupancy_labels, save_occupancy
from ..seeding import derive_rng, derive_seed
from .observe import ObservationBundle, extract_partial, select_views
from .render import PosedImage, make_posed_image, render_depth
from .scene import SceneSpec, place_scene


@dataclass
class SynthConfig:
    master_seed: int = 0
    n_scenes: int = 8
    objects_min: int = 1
    objects_max: int = 4
    floor_extent: float = 6.0
    image_size: int = 64
    focal: float = 60.0
    n_candidate_cams: int = 10
    k_min: int = 2
    k_max: int = 5
    partial_views: int = 1  # views feeding the partial cloud (single-sided when 1)
    noise_sigma: float = 0.005
    max_scan_points: int = 20000
    det_voxel_size: float = 0.125
    det_dims: tuple = (56, 56, 24)
    label_spacing_frac: float = 0.5  # sampling spacing as fraction of voxel size
    splits: tuple = (0.7, 0.1, 0.2)  # train/val/test by scene
    with_detection: bool = True  # scene occupancy labels + scans
    with_bundles: bool = True  # per-object observation bundles

    def to_dict(self):
        d = dict(self.__dict__)
        d["det_dims"] = list(self.det_dims)
        d["splits"] = list(self.splits)
        return d

    @staticmethod
    def from_dict(d):
        cfg = SynthConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise KeyError(f"unknown synth config key {k!r}")
            if k == "det_dims":
                v = tuple(v)
            if k == "splits":
                v = tuple(v)
            setattr(cfg, k, v)
        return cfg


def candidate_cameras(cfg: SynthConfig, scene_seed: int) -> list:
    """A jittered ring of inward-looking cameras around the scene."""
    rng = derive_rng(cfg.master_seed, "cams", scene_seed)
    cams = []
    radius = 0.62 * cfg.floor_extent
    for i in range(cfg.n_candidate_cams):
        ang = 2 * np.pi * i / cfg.n_candidate_cams + rng.uniform(-0.15, 0.15)
        height = rng.uniform(1.3, 2.4)
        eye = (radius * np.cos(ang), radius * np.sin(ang), height)
        target = (rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0.7)
        s = cfg.image_size
        cams.append(look_at(eye, target, cfg.focal, cfg.focal, (s - 1) / 2, (s - 1) / 2, s, s))
    return cams


def detection_grid(cfg: SynthConfig) -> GridSpec:
    nx, ny, nz = cfg.det_dims
    origin = np.array([-nx * cfg.det_voxel_size / 2, -ny * cfg.det_voxel_size / 2, -cfg.det_voxel_size])
    return GridSpec(origin, cfg.det_voxel_size, cfg.det_dims)


def _camera_dict(cam: CameraModel):
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "w2c": [v for row in cam.world_to_camera.to_matrix() for v in row],
    }


def _camera_from_dict(d) -> CameraModel:
    m = np.array(d["w2c"], dtype=np.float64).reshape(4, 4)
    return CameraModel(
        d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"], RigidScaleTransform.from_matrix(m)
    )


def save_image(prefix: str, img: PosedImage):
    """Raw little-endian float32 (H, W, 4) plus a JSON header sidecar."""
    arr = np.asarray(img.channels, dtype="<f4")
    with open(prefix + ".img", "wb") as f:
        f.write(arr.tobytes())
    header = {
        "height": int(arr.shape[0]),
        "width": int(arr.shape[1]),
        "channels": int(arr.shape[2]),
        "dtype": "float32-le",
        "camera": _camera_dict(img.camera),
    }
    with open(prefix + ".json", "w") as f:
        json.dump(header, f, sort_keys=True)


def load_image(prefix: str) -> PosedImage:
    with open(prefix + ".json") as f:
        header = json.load(f)
    shape = (header["height"], header["width"], header["channels"])
    arr = np.fromfile(prefix + ".img", dtype="<f4").reshape(shape)
    return PosedImage(arr, _camera_from_dict(header["camera"]))


def make_bundles(scene: SceneSpec, cfg: SynthConfig, scene_idx: int):
    """All per-object observation bundles for one scene (plus the scene scan)."""
    cams = candidate_cameras(cfg, scene.seed)
    depths = [render_depth(scene, cam) for cam in cams]
    rng = derive_rng(cfg.master_seed, "bundles", scene.seed)
    bundles = []
    instances = scene.instances if cfg.with_bundles else ()
    for obj_idx, inst in enumerate(instances):
        k = int(rng.integers(cfg.k_min, cfg.k_max + 1))
        box = inst.world_box()
        try:
            selected = select_views(box, min(k, len(cams)), cams)
        except ValueError:
            continue  # invisible object: skip, mirrored in the manifest by absence
        by_identity = {id(c): i for i, c in enumerate(cams)}
        sel_idx = [by_identity[id(c)] for c in selected]
        n_partial = max(1, min(cfg.partial_views, len(sel_idx)))
        try:
            partial = extract_partial(
                [depths[i] for i in sel_idx[:n_partial]],
                [cams[i] for i in sel_idx[:n_partial]],
                inst,
                noise_sigma=cfg.noise_sigma,
                seed=derive_seed(cfg.master_seed, "partial", scene.seed, obj_idx),
            )
        except ValueError:
            continue
        images = [make_posed_image(scene, cams[i], depths[i]) for i in sel_idx]
        bundles.append(
            ObservationBundle(
                partial=partial,
                images=images,
                gt_shape=inst.shape,
                gt_box=box,
                category=inst.category,
                pose=inst.pose,
                bundle_id=f"s{scene_idx:04d}_o{obj_idx}",
            )
        )
    # merged scene scan from every candidate camera (detection input)
    pts = []
    for dm, cam in zip(depths, cams):
        hit = dm.hit_mask
        if hit.any():
            vs, us = np.nonzero(hit)
            from ..geom import backproject

            pts.append(backproject(us.astype(np.float64), vs.astype(np.float64), dm.depth[hit], cam))
    scan = np.concatenate(pts) if pts else np.zeros((0, 3))
    if len(scan) > cfg.max_scan_points:
        sel = derive_rng(cfg.master_seed, "scan", scene.seed).choice(len(scan), cfg.max_scan_points, replace=False)
        scan = scan[np.sort(sel)]
    return bundles, scan


def generate_dataset(out_dir: str, cfg: SynthConfig) -> str:
    """Write bundles, scene scans, occupancy labels, manifest, splits.

    Returns the manifest path. Deterministic per (config, master seed).
    """
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "bundles"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "scenes"), exist_ok=True)
    grid = detection_grid(cfg) if cfg.with_detection else None
    records = []
    split_rng = derive_rng(cfg.master_seed, "splits")
    split_names = ("train", "val", "test")
    split_members = {s: [] for s in split_names}
    for scene_idx in range(cfg.n_scenes):
        scene_seed = derive_seed(cfg.master_seed, "scene", scene_idx)
        n_obj = int(derive_rng(cfg.master_seed, "nobj", scene_idx).integers(cfg.objects_min, cfg.objects_max + 1))
        scene = place_scene(n_obj, scene_seed, cfg.floor_extent)
        bundles, scan = make_bundles(scene, cfg, scene_idx)
        u = split_rng.random()
        split = split_names[0] if u < cfg.splits[0] else split_names[1] if u < cfg.splits[0] + cfg.splits[1] else split_names[2]
        scene_dir = os.path.join(out_dir, "scenes", f"scene_{scene_idx:04d}")
        os.makedirs(scene_dir, exist_ok=True)
        save_ply(os.path.join(scene_dir, "scan.ply"), scan)
        occ_path = ""
        if grid is not None:
            labels = gen_occupancy_labels(scene, grid, spacing=cfg.label_spacing_frac * cfg.det_voxel_size)
            occ_path = os.path.join("scenes", f"scene_{scene_idx:04d}", "occupancy.occ")
            save_occupancy(os.path.join(out_dir, occ_path), labels)
        records.append(
            {
                "type": "scene",
                "scene_id": f"scene_{scene_idx:04d}",
                "split": split,
                "seed": scene_seed,
                "scan": os.path.join("scenes", f"scene_{scene_idx:04d}", "scan.ply"),
                "occupancy": occ_path,
                "boxes": [
                    {"category": inst.category, **inst.world_box().to_dict()} for inst in scene.instances
                ],
            }
        )
        for b in bundles:
            bdir = os.path.join(out_dir, "bundles", b.bundle_id)
            os.makedirs(bdir, exist_ok=True)
            save_ply(os.path.join(bdir, "partial.ply"), b.partial)
            for vi, img in enumerate(b.images):
                save_image(os.path.join(bdir, f"view{vi}"), img)
            with open(os.path.join(bdir, "shape.json"), "w") as f:
                json.dump(b.gt_shape.to_dict(), f, sort_keys=True)
            records.append(
                {
                    "type": "bundle",
                    "bundle_id": b.bundle_id,
                    "scene_id": f"scene_{scene_idx:04d}",
                    "split": split,
                    "category": b.category,
                    "seed": scene_seed,
                    "k": len(b.images),
                    "box": b.gt_box.to_dict(),
                    "pose": b.pose.to_dict(),
                    "partial": os.path.join("bundles", b.bundle_id, "partial.ply"),
                    "images": [os.path.join("bundles", b.bundle_id, f"view{vi}") for vi in range(len(b.images))],
                    "shape": os.path.join("bundles", b.bundle_id, "shape.json"),
                }
            )
            split_members[split].append(b.bundle_id)
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    with open(manifest_path, "w") as f:
        header = {"type": "header", "config": cfg.to_dict(), "n_records": len(records)}
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
    os.makedirs(os.path.join(out_dir, "splits"), exist_ok=True)
    for s in split_names:
        with open(os.path.join(out_dir, "splits", f"{s}.txt"), "w") as f:
            f.write("".join(bid + "\n" for bid in split_members[s]))
    return manifest_path


def read_manifest(manifest_path: str):
    """Returns (header, scene_records, bundle_records)."""
    header = None
    scenes, bundles = [], []
    with open(manifest_path) as f:
        for line in f:
            rec = json.loads(line)
            if rec["type"] == "header":
                header = rec
            elif rec["type"] == "scene":
                scenes.append(rec)
            else:
                bundles.append(rec)
    return header, scenes, bundles


def load_bundle(root: str, rec: dict) -> ObservationBundle:
    from ..geom import Shape

    partial, _, _ = load_ply(os.path.join(root, rec["partial"]))
    images = [load_image(os.path.join(root, prefix)) for prefix in rec["images"]]
    with open(os.path.join(root, rec["shape"])) as f:
        shape = Shape.from_dict(json.load(f))
    return ObservationBundle(
        partial=partial,
        images=images,
        gt_shape=shape,
        gt_box=OrientedBox.from_dict(rec["box"]),
        category=rec["category"],
        pose=RigidScaleTransform.from_dict(rec["pose"]),
        bundle_id=rec["bundle_id"],
    )
