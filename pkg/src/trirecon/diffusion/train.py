"""Latent diffusion training over observation bundles (VAE frozen).

Latents are standardized to unit global std before diffusion so sigma_data is
meaningful; the scale is estimated on the training set and stored in the
checkpoint. Per-modality condition dropout enables single-modality inference.
"""

from __future__ import annotations

import numpy as np
import torch

from ..checkpoint import load_checkpoint, save_checkpoint, write_loss_curve
from ..geom import sample_surface
from ..hfa import ConditionTensors, make_condition
from ..seeding import derive_rng, derive_seed
from ..vae.model import TriplaneVAE
from ..vae.train import TrainingDiverged
from .denoiser import DenoiserConfig, TriplaneDenoiser
from .edm import EDMParams, loss_weight, sample_sigma


def encode_bundles(vae: TriplaneVAE, bundles, k_points: int, spacing: float, seed: int):
    """Frozen-VAE posterior (mu, sigma) per bundle, from dense GT surface clouds."""
    out = []
    with torch.no_grad():
        for i, b in enumerate(bundles):
            sp = spacing
            pts, _ = sample_surface(b.gt_shape, sp, seed=derive_seed(seed, "enc", i))
            while len(pts) < k_points:
                sp *= 0.6
                pts, _ = sample_surface(b.gt_shape, sp, seed=derive_seed(seed, "enc", i))
            sel = derive_rng(seed, "enc_sel", i).choice(len(pts), k_points, replace=False)
            enc = vae.encode(torch.as_tensor(pts[sel], dtype=torch.float32))
            out.append((enc.mu.clone(), enc.sigma.clone()))
    return out


def estimate_latent_std(encoded, seed: int) -> float:
    """Global std of sampled latents across the training set."""
    gen = torch.Generator().manual_seed(derive_seed(seed, "latstd") % 2**63)
    samples = []
    for mu, sigma in encoded:
        eps = torch.randn(mu.shape, generator=gen)
        samples.append(mu + sigma * eps)
    return float(torch.stack(samples).std())


def train_diffusion(
    bundles,
    vae: TriplaneVAE,
    dcfg: DenoiserConfig,
    params: EDMParams,
    seed: int,
    steps: int,
    batch_size: int = 8,
    init_path=None,
    out_path=None,
    curve_path=None,
    log_every=100,
):
    """Returns (denoiser, latent_std, curve). Deterministic per seed."""
    if not bundles:
        raise ValueError("empty bundle set")
    vae.eval()
    vcfg = vae.cfg
    encoded = encode_bundles(vae, bundles, vcfg.k_points, vcfg.surface_spacing, seed)
    latent_std = estimate_latent_std(encoded, seed)
    conds = [make_condition(b.partial, b.images, b.pose) for b in bundles]
    torch.manual_seed(derive_seed(seed, "diff_init") % 2**63)
    model = TriplaneDenoiser(vcfg.latent_channels, dcfg, params)
    start_step = 0
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    if init_path:
        header, payload = load_checkpoint(init_path, expect_kind="diffusion")
        model.load_state_dict(payload["model"])
        if header.get("rng", {}).get("resume"):
            opt.load_state_dict(payload["optimizer"])
            start_step = header["step"]
            latent_std = payload["latent_std"]
    curve = []
    for step in range(start_step, start_step + steps):
        rng = derive_rng(seed, "diff_step", step)
        idx = rng.integers(len(bundles), size=min(batch_size, len(bundles)))
        t0s, sigmas, step_conds = [], [], []
        for j, bi in enumerate(idx):
            mu, sg = encoded[bi]
            gen = torch.Generator().manual_seed(derive_seed(seed, "lat", step, j) % 2**63)
            t0 = (mu + sg * torch.randn(mu.shape, generator=gen)) / latent_std
            t0s.append(t0)
            sigmas.append(sample_sigma(derive_seed(seed, "sigma", step, j), params))
            cond = conds[bi]
            drop_p = rng.random() < dcfg.dropout_partial
            drop_i = rng.random() < dcfg.dropout_images
            step_conds.append(
                ConditionTensors(
                    partial=None if drop_p else cond.partial,
                    images=None if drop_i else cond.images,
                    intrinsics=None if drop_i else cond.intrinsics,
                    w2c=None if drop_i else cond.w2c,
                    pose=cond.pose,
                )
            )
        t0 = torch.stack(t0s)
        sigma_t = torch.tensor(sigmas, dtype=torch.float32)
        noise_gen = torch.Generator().manual_seed(derive_seed(seed, "noise", step) % 2**63)
        noisy = t0 + sigma_t.reshape(-1, 1, 1, 1, 1) * torch.randn(t0.shape, generator=noise_gen)
        d = model(noisy, sigma_t, step_conds)
        w = torch.tensor([loss_weight(s, params) for s in sigmas], dtype=torch.float32)
        loss = (w * (d - t0).square().mean(dim=(1, 2, 3, 4))).mean()
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"diffusion loss became non-finite at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % log_every == 0 or step == start_step + steps - 1:
            curve.append((step, float(loss.detach())))
    if curve_path:
        write_loss_curve(curve_path, curve, ["step", "loss"])
    if out_path:
        save_checkpoint(
            out_path,
            "diffusion",
            {
                "denoiser": dcfg.to_dict(),
                "edm": params.to_dict(),
                "latent_channels": vcfg.latent_channels,
                "reso": vcfg.reso,
            },
            start_step + steps,
            {"model": model.state_dict(), "optimizer": opt.state_dict(), "latent_std": latent_std},
            rng={"master_seed": int(seed), "next_step": int(start_step + steps), "resume": True},
        )
    return model, latent_std, curve


def load_denoiser(path):
    """Returns (denoiser, latent_std, edm params)."""
    header, payload = load_checkpoint(path, expect_kind="diffusion")
    dcfg = DenoiserConfig.from_dict(header["config"]["denoiser"])
    params = EDMParams.from_dict(header["config"]["edm"])
    model = TriplaneDenoiser(header["config"]["latent_channels"], dcfg, params)
    model.load_state_dict(payload["model"])
    model.eval()
    return model, payload["latent_std"], params
