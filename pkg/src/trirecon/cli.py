"""Command-line orchestrator: synth, train, recon, eval-det, ablate, info.

Exit codes: 0 success, 2 config error, 3 dependency error, 4 numeric failure,
5 output directory locked. Output artifacts embed the config hash; wall-clock
timestamps go only to the run log so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np
import torch

from . import __version__
from .checkpoint import load_checkpoint
from .config import ConfigError, config_hash, load_config, parse_sections
from .geom import load_ply, save_ply
from .metrics.boxes import OrientedBox
from .occgod.labels import load_occupancy
from .occgod.train import DetectionScene, evaluate_detector, load_detector, train_detector
from .pipeline import evaluate_split
from .seeding import derive_seed
from .synth.dataset import generate_dataset, load_bundle, read_manifest
from .synth.generators import CATEGORIES
from .vae.train import TrainingDiverged, load_vae, train_vae

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERIC = 4
EXIT_LOCKED = 5


class DependencyError(RuntimeError):
    pass


class OutputLock:
    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, ".lock")

    def __enter__(self):
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise BlockingIOError(f"output directory is locked by another run: {self.path}")
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


def _out_dir(path: str) -> str:
    root = os.environ.get("TRIRECON_OUT")
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    os.makedirs(path, exist_ok=True)
    return path


def _log(out_dir, message):
    with open(os.path.join(out_dir, "run.log"), "a") as f:
        f.write(f"[{time.strftime('%Y-%m-%d %H:%M:%S')}] {message}\n")


def _echo_config(out_dir, cfg):
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg, f, sort_keys=True, indent=1)
    return config_hash(cfg)


def _write_manifest(out_dir, kind, cfg, lineage=(), reports=()):
    doc = {
        "run_id": f"{kind}-{config_hash(cfg)}",
        "kind": kind,
        "config_hash": config_hash(cfg),
        "lineage": list(lineage),
        "reports": list(reports),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(doc, f, sort_keys=True, indent=1)


def _require(path, what):
    if not path or not os.path.exists(path):
        raise DependencyError(f"missing {what}: {path!r}")
    return path


def _split_bundles(data_dir, split):
    manifest = _require(os.path.join(data_dir, "manifest.jsonl"), "dataset manifest")
    _, scenes, bundles = read_manifest(manifest)
    recs = [r for r in bundles if r["split"] == split]
    return [load_bundle(data_dir, r) for r in recs], scenes


def _detection_scenes(data_dir, split, spec_from_file=True):
    manifest = _require(os.path.join(data_dir, "manifest.jsonl"), "dataset manifest")
    _, scenes, _ = read_manifest(manifest)
    out = []
    for rec in scenes:
        if rec["split"] != split:
            continue
        scan, _, _ = load_ply(os.path.join(data_dir, rec["scan"]))
        occ = load_occupancy(os.path.join(data_dir, rec["occupancy"])) if rec["occupancy"] else None
        if occ is None:
            raise DependencyError(f"scene {rec['scene_id']} lacks occupancy labels")
        boxes = [OrientedBox.from_dict(b) for b in rec["boxes"]]
        class_ids = [CATEGORIES.index(b["category"]) for b in rec["boxes"]]
        out.append(DetectionScene(scan, boxes, class_ids, occ.spec, occ))
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    cfg = load_config(args.config, _overrides(args))
    if args.scenes is not None:
        cfg["synth"]["n_scenes"] = args.scenes
    if cfg["synth"]["n_scenes"] <= 0:
        raise ConfigError("synth.n_scenes must be positive")
    out = _out_dir(args.out)
    with OutputLock(out):
        _echo_config(out, cfg)
        sections = parse_sections(cfg)
        t0 = time.time()
        manifest = generate_dataset(out, sections["synth"])
        _, scenes, bundles = read_manifest(manifest)
        cats = sorted({r["category"] for r in bundles})
        _write_manifest(out, "synth", cfg, reports=[os.path.basename(manifest)])
        _log(out, f"synth: {len(scenes)} scenes, {len(bundles)} bundles in {time.time() - t0:.1f}s")
        print(f"scenes: {len(scenes)}")
        print(f"bundles: {len(bundles)}")
        print(f"categories: {' '.join(cats)}")
    return EXIT_OK


def _unique_shapes(bundles):
    seen = {}
    for b in bundles:
        key = json.dumps(b.gt_shape.to_dict(), sort_keys=True)
        seen.setdefault(key, b.gt_shape)
    return list(seen.values())


def cmd_train(args):
    cfg = load_config(args.config, _overrides(args))
    out = _out_dir(args.out)
    with OutputLock(out):
        _echo_config(out, cfg)
        sections = parse_sections(cfg)
        seed = cfg["master_seed"]
        lineage = []
        if args.stage == "vae":
            bundles, _ = _split_bundles(_require(args.data, "dataset"), "train")
            shapes = _unique_shapes(bundles)
            if not shapes:
                raise DependencyError("train split has no shapes")
            steps = args.steps or cfg["vae"]["steps"]
            ckpt = os.path.join(out, "vae.ckpt")
            train_vae(shapes, sections["vae"], derive_seed(seed, "vae"), steps,
                      out_path=ckpt, curve_path=os.path.join(out, "vae_curve.csv"))
        elif args.stage == "diffusion":
            vae_path = _require(args.vae, "VAE checkpoint (--vae)")
            lineage.append(vae_path)
            vae = load_vae(vae_path)
            bundles, _ = _split_bundles(_require(args.data, "dataset"), "train")
            if not bundles:
                raise DependencyError("train split has no bundles")
            from .diffusion.train import train_diffusion

            steps = args.steps or cfg["diffusion"]["steps"]
            if args.init:
                lineage.append(_require(args.init, "init checkpoint (--init)"))
            ckpt = os.path.join(out, "diffusion.ckpt")
            train_diffusion(
                bundles, vae, sections["denoiser"], sections["edm"], derive_seed(seed, "diffusion"),
                steps, batch_size=cfg["diffusion"]["batch_size"], init_path=args.init,
                out_path=ckpt, curve_path=os.path.join(out, "diffusion_curve.csv"),
            )
        else:  # detector
            scenes = _detection_scenes(_require(args.data, "dataset"), "train")
            if not scenes:
                raise DependencyError("train split has no detection scenes")
            steps = args.steps or cfg["detector"]["steps"]
            ckpt = os.path.join(out, "detector.ckpt")
            train_detector(
                scenes, sections["detector"], not args.no_occ_head, derive_seed(seed, "detector"),
                steps, out_path=ckpt, curve_path=os.path.join(out, "detector_curve.csv"),
            )
        _write_manifest(out, f"train-{args.stage}", cfg, lineage=lineage, reports=[os.path.basename(ckpt)])
        _log(out, f"train {args.stage}: done -> {ckpt}")
        print(f"checkpoint: {ckpt}")
    return EXIT_OK


def _report_lines(per_cat):
    lines = ["category,miou,chamfer_l2_x1000,fscore_1pct"]
    for cat, row in sorted(per_cat.items()):
        lines.append(f"{cat},{row.miou!r},{row.chamfer_l2_x1000!r},{row.fscore_1pct!r}")
    return lines


def cmd_recon(args):
    cfg = load_config(args.config, _overrides(args))
    out = _out_dir(args.out)
    with OutputLock(out):
        _echo_config(out, cfg)
        vae = load_vae(_require(args.vae, "VAE checkpoint (--vae)"))
        from .diffusion.train import load_denoiser

        denoiser, latent_std, params = load_denoiser(_require(args.diffusion, "diffusion checkpoint (--diffusion)"))
        bundles, _ = _split_bundles(_require(args.data, "dataset"), args.split)
        if args.limit:
            bundles = bundles[: args.limit]
        if not bundles:
            raise DependencyError(f"split {args.split!r} has no bundles")
        mesh_dir = os.path.join(out, "meshes")
        os.makedirs(mesh_dir, exist_ok=True)
        seed = derive_seed(cfg["master_seed"], "recon", args.modality, args.pose_noise)

        def save_mesh(bundle_id, category, row, verts, faces):
            save_ply(os.path.join(mesh_dir, f"{bundle_id}.ply"), verts, faces=faces)

        rows, failures, per_cat = evaluate_split(
            vae, denoiser, latent_std, params, bundles,
            modality=args.modality, grid_res=cfg["recon"]["grid_res"], seed=seed,
            pose_noise=args.pose_noise, n_points=cfg["recon"]["n_eval_points"], on_result=save_mesh,
        )
        report_csv = os.path.join(out, "report.csv")
        with open(report_csv, "w") as f:
            f.write("\n".join(_report_lines(per_cat)) + "\n")
        with open(os.path.join(out, "report.txt"), "w") as f:
            for cat, row in sorted(per_cat.items()):
                f.write(f"{cat}: {row.cell()}\n")
        for bid, msg in failures:
            _log(out, f"recon failure {bid}: {msg}")
        _write_manifest(out, "recon", cfg, lineage=[args.vae, args.diffusion],
                        reports=["report.csv", "report.txt"])
        _log(out, f"recon: {len(rows)} ok, {len(failures)} failed")
        print(f"reconstructed: {len(rows)}")
        print(f"failures: {len(failures)}")
        for cat, row in sorted(per_cat.items()):
            print(f"{cat}: {row.cell()}")
    return EXIT_OK


def cmd_eval_det(args):
    cfg = load_config(args.config, _overrides(args))
    out = _out_dir(args.out)
    with OutputLock(out):
        _echo_config(out, cfg)
        scenes = _detection_scenes(_require(args.data, "dataset"), args.split)
        if not scenes:
            raise DependencyError(f"split {args.split!r} has no detection scenes")
        model = load_detector(_require(args.checkpoint, "detector checkpoint"))
        report = evaluate_detector(model, scenes)
        report_csv = os.path.join(out, "detection.csv")
        with open(report_csv, "w") as f:
            f.write("class,ap50,ar50,n_gt\n")
            for cls, (ap, ar, n) in sorted(report.per_class.items()):
                f.write(f"{CATEGORIES[cls]},{ap!r},{ar!r},{n}\n")
            f.write(f"Overall,{report.map50!r},{report.mar50!r},{sum(v[2] for v in report.per_class.values())}\n")
        _write_manifest(out, "eval-det", cfg, lineage=[args.checkpoint], reports=["detection.csv"])
        print(f"mAP@0.5: {report.map50:.4f}")
        print(f"mAR@0.5: {report.mar50:.4f}")
        print(f"report: {report_csv}")
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args.config, _overrides(args))
    out = _out_dir(args.out)
    with OutputLock(out):
        _echo_config(out, cfg)
        name = args.name
        from .ablations import run_ablation

        table = run_ablation(name, cfg, _require(args.data, "dataset"), out, args)
        path = os.path.join(out, f"ablation_{name}.csv")
        with open(path, "w") as f:
            f.write(table)
        _write_manifest(out, f"ablate-{name}", cfg, reports=[os.path.basename(path)])
        print(table)
    return EXIT_OK


def cmd_info(args):
    print(f"trirecon {__version__}")
    print(f"torch {torch.__version__}, numpy {np.__version__}")
    print(f"categories: {' '.join(CATEGORIES)}")
    if args.checkpoint:
        header, _ = load_checkpoint(args.checkpoint)
        print(f"checkpoint kind: {header['kind']}, step: {header['step']}")
        print(json.dumps(header["config"], sort_keys=True, indent=1))
    return EXIT_OK


# ---------------------------------------------------------------------------


def _overrides(args):
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        out[key] = json.loads(value) if value and value[0] in "-0123456789[{tfn\"" else value
    if getattr(args, "seed", None) is not None:
        out["master_seed"] = args.seed
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="trirecon", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON config file (defaults apply)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override config values (dotted keys)")
        sp.add_argument("--seed", type=int, help="override master seed")
        sp.add_argument("--out", required=True, help="output directory (TRIRECON_OUT prefixes relative paths)")
        if data:
            sp.add_argument("--data", help="dataset directory (from `trirecon synth`)")

    sp = sub.add_parser("synth", help="generate the procedural dataset")
    common(sp, data=False)
    sp.add_argument("--scenes", type=int, help="override synth.n_scenes")
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("train", help="train one stage")
    sp.add_argument("stage", choices=["vae", "diffusion", "detector"])
    common(sp)
    sp.add_argument("--vae", help="VAE checkpoint (diffusion stage)")
    sp.add_argument("--init", help="initialize from a checkpoint (finetune)")
    sp.add_argument("--steps", type=int, help="override step count")
    sp.add_argument("--no-occ-head", action="store_true", help="detector without the occupancy head")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("recon", help="reconstruct a dataset split and evaluate")
    common(sp)
    sp.add_argument("--vae", required=True)
    sp.add_argument("--diffusion", required=True)
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp.add_argument("--modality", default="pts+imgs", choices=["pts", "pts+imgs", "imgs"])
    sp.add_argument("--pose-noise", action="store_true", help="perturb boxes with the robustness ranges")
    sp.add_argument("--limit", type=int, help="evaluate at most N bundles")
    sp.set_defaults(fn=cmd_recon)

    sp = sub.add_parser("eval-det", help="evaluate a trained detector")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp.set_defaults(fn=cmd_eval_det)

    sp = sub.add_parser("ablate", help="run a paired-configuration comparison")
    sp.add_argument("name", choices=["training-setup", "hfa-vs-project", "modality", "pose-noise", "occ-head"])
    common(sp)
    sp.add_argument("--vae", help="VAE checkpoint (reused where applicable)")
    sp.add_argument("--diffusion", help="diffusion checkpoint (modality/pose-noise ablations)")
    sp.add_argument("--pretrain-data", help="second dataset for the training-setup ablation")
    sp.set_defaults(fn=cmd_ablate)

    sp = sub.add_parser("info", help="environment and checkpoint info")
    sp.add_argument("--checkpoint")
    sp.set_defaults(fn=cmd_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BlockingIOError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_LOCKED


if __name__ == "__main__":
    sys.exit(main())
