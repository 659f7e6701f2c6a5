"""Paired-configuration comparison harnesses behind `trirecon ablate`.

Each ablation runs its configurations under a shared seed and renders a
side-by-side CSV table. Training-based ablations honor the step counts in the
config, so desk-scale runs stay tractable.
"""

from __future__ import annotations

import os

from .config import parse_sections
from .pipeline import evaluate_split
from .seeding import derive_seed
from .vae.train import load_vae, train_vae


def _cat_table(rows_by_name):
    cats = sorted({c for rows in rows_by_name.values() for c in rows})
    lines = ["variant," + ",".join(f"{c}_miou,{c}_chamfer,{c}_fscore" for c in cats)]
    for name, rows in rows_by_name.items():
        cells = []
        for c in cats:
            r = rows.get(c)
            if r is None:
                cells.extend(["", "", ""])
            else:
                cells.extend([repr(r.miou), repr(r.chamfer_l2_x1000), repr(r.fscore_1pct)])
        lines.append(f"{name}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def _load_recon_stack(cfg, data_dir, args, split="test"):
    from .cli import DependencyError, _split_bundles
    from .diffusion.train import load_denoiser

    if not args.vae or not args.diffusion:
        raise DependencyError("this ablation needs --vae and --diffusion checkpoints")
    vae = load_vae(args.vae)
    denoiser, latent_std, params = load_denoiser(args.diffusion)
    bundles, _ = _split_bundles(data_dir, split)
    return vae, denoiser, latent_std, params, bundles


def _train_recon_stack(cfg, data_dir, out_dir, tag, seed, conditioning=None, init_path=None,
                       vae_ckpt=None, train_split="train"):
    from .cli import DependencyError, _split_bundles
    from .diffusion.train import train_diffusion

    sections = parse_sections(cfg)
    bundles, _ = _split_bundles(data_dir, train_split)
    if not bundles:
        raise DependencyError(f"{data_dir}: empty {train_split} split")
    if vae_ckpt:
        vae = load_vae(vae_ckpt)
    else:
        from .cli import _unique_shapes

        vae, _ = train_vae(_unique_shapes(bundles), sections["vae"], derive_seed(seed, "vae", tag),
                           cfg["vae"]["steps"], out_path=os.path.join(out_dir, f"vae_{tag}.ckpt"))
    dcfg = sections["denoiser"]
    if conditioning:
        dcfg.conditioning = conditioning
    ckpt = os.path.join(out_dir, f"diffusion_{tag}.ckpt")
    denoiser, latent_std, _ = train_diffusion(
        bundles, vae, dcfg, sections["edm"], derive_seed(seed, "diff", tag), cfg["diffusion"]["steps"],
        batch_size=cfg["diffusion"]["batch_size"], init_path=init_path, out_path=ckpt,
    )
    return vae, denoiser, latent_std, sections["edm"], ckpt


def run_ablation(name, cfg, data_dir, out_dir, args) -> str:
    from .cli import DependencyError, _detection_scenes, _split_bundles

    seed = cfg["master_seed"]
    grid_res = cfg["recon"]["grid_res"]
    n_pts = cfg["recon"]["n_eval_points"]

    if name == "modality":
        vae, denoiser, latent_std, params, bundles = _load_recon_stack(cfg, data_dir, args)
        out = {}
        for modality in ("pts", "pts+imgs"):
            _, _, per_cat = evaluate_split(vae, denoiser, latent_std, params, bundles, modality=modality,
                                           grid_res=grid_res, seed=derive_seed(seed, "ab_mod"), n_points=n_pts)
            out[modality] = per_cat
        return _cat_table(out)

    if name == "pose-noise":
        vae, denoiser, latent_std, params, bundles = _load_recon_stack(cfg, data_dir, args)
        out = {}
        for label, noisy in (("gt-bbox", False), ("noisy-bbox", True)):
            _, _, per_cat = evaluate_split(vae, denoiser, latent_std, params, bundles, modality="pts+imgs",
                                           grid_res=grid_res, seed=derive_seed(seed, "ab_pose"),
                                           pose_noise=noisy, n_points=n_pts)
            out[label] = per_cat
        return _cat_table(out)

    if name == "hfa-vs-project":
        out = {}
        bundles, _ = _split_bundles(data_dir, "test")
        for tag, conditioning in (("hfa", "hfa"), ("triplane-project", "direct")):
            vae, denoiser, latent_std, params, _ = _train_recon_stack(
                cfg, data_dir, out_dir, tag, seed, conditioning=conditioning, vae_ckpt=args.vae)
            _, _, per_cat = evaluate_split(vae, denoiser, latent_std, params, bundles, modality="pts+imgs",
                                           grid_res=grid_res, seed=derive_seed(seed, "ab_hfa"), n_points=n_pts)
            out[tag] = per_cat
        return _cat_table(out)

    if name == "training-setup":
        if not args.pretrain_data:
            raise DependencyError("training-setup ablation needs --pretrain-data (the synthetic-corpus dataset)")
        out = {}
        test_bundles, _ = _split_bundles(data_dir, "test")
        # w/o pretrain: train on the target dataset only
        vae, den, std, edm, _ = _train_recon_stack(cfg, data_dir, out_dir, "scratch", seed, vae_ckpt=args.vae)
        _, _, out["wo-pretrain"] = evaluate_split(vae, den, std, edm, test_bundles, grid_res=grid_res,
                                                  seed=derive_seed(seed, "ab_ts"), n_points=n_pts)
        # w/o finetune: train on the pretrain corpus only, evaluate on the target
        vae_p, den_p, std_p, edm_p, pre_ckpt = _train_recon_stack(
            cfg, args.pretrain_data, out_dir, "pretrain", seed, vae_ckpt=args.vae)
        _, _, out["wo-finetune"] = evaluate_split(vae_p, den_p, std_p, edm_p, test_bundles, grid_res=grid_res,
                                                  seed=derive_seed(seed, "ab_ts"), n_points=n_pts)
        # full: pretrain then finetune (same VAE so the latent space is shared)
        vae_f, den_f, std_f, edm_f, _ = _train_recon_stack(
            cfg, data_dir, out_dir, "full", seed, init_path=pre_ckpt,
            vae_ckpt=args.vae or os.path.join(out_dir, "vae_pretrain.ckpt"))
        _, _, out["full"] = evaluate_split(vae_f, den_f, std_f, edm_f, test_bundles, grid_res=grid_res,
                                           seed=derive_seed(seed, "ab_ts"), n_points=n_pts)
        return _cat_table(out)

    if name == "occ-head":
        from .occgod.train import evaluate_detector, train_detector

        sections = parse_sections(cfg)
        train_scenes = _detection_scenes(data_dir, "train")
        test_scenes = _detection_scenes(data_dir, "test")
        if not train_scenes or not test_scenes:
            raise DependencyError("occ-head ablation needs detection scenes in train and test splits")
        lines = ["variant,map50,mar50"]
        for label, use_occ in (("baseline", False), ("occ-head", True)):
            model, _ = train_detector(train_scenes, sections["detector"], use_occ,
                                      derive_seed(seed, "ab_occ"), cfg["detector"]["steps"])
            rep = evaluate_detector(model, test_scenes)
            lines.append(f"{label},{rep.map50!r},{rep.mar50!r}")
        return "\n".join(lines) + "\n"

    raise ValueError(f"unknown ablation {name!r}")
