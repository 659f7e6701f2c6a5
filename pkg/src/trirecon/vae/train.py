"""VAE training on analytic shapes: augmented surface clouds in, occupancy out."""

from __future__ import annotations

import numpy as np
import torch

from ..checkpoint import save_checkpoint, write_loss_curve
from ..geom import augmentation_transform, occupancy, sample_surface
from ..seeding import derive_rng, derive_seed
from .model import TriplaneVAE, VAEConfig, reparameterize, vae_loss


class TrainingDiverged(RuntimeError):
    pass


class ShapeBank:
    """Pre-sampled dense surface clouds per shape; cheap per-step resampling."""

    def __init__(self, shapes, spacing: float, min_points: int, seed: int = 0):
        self.shapes = list(shapes)
        self.surfaces = []
        for i, s in enumerate(self.shapes):
            sp = spacing
            pts, _ = sample_surface(s, sp, seed=derive_seed(seed, "bank", i))
            while len(pts) < min_points:
                sp *= 0.6
                pts, _ = sample_surface(s, sp, seed=derive_seed(seed, "bank", i))
            self.surfaces.append(pts)

    def __len__(self):
        return len(self.shapes)


def sample_training_batch(bank: ShapeBank, idx: int, cfg: VAEConfig, rng: np.random.Generator):
    """One (input cloud, query points, occupancy labels) triple.

    Augmentation transforms the shape; labels are the analytic oracle on the
    augmented shape, i.e. the oracle at inverse-transformed queries.
    """
    shape = bank.shapes[idx]
    surface = bank.surfaces[idx]
    if cfg.augment:
        t = augmentation_transform(
            rng.uniform(-cfg.aug_rot_deg, cfg.aug_rot_deg),
            rng.uniform(*cfg.aug_scale),
            rng.uniform(-cfg.aug_shift, cfg.aug_shift, 3),
        )
    else:
        t = augmentation_transform(0.0, 1.0, (0.0, 0.0, 0.0))
    sel = rng.choice(len(surface), size=min(cfg.k_points, len(surface)), replace=False)
    cloud = t.apply(surface[sel])
    m = cfg.queries_per_step
    n_near = m // 2
    near = surface[rng.choice(len(surface), n_near)] + rng.normal(0, cfg.near_surface_sigma, (n_near, 3))
    near = t.apply(near)
    uniform = rng.uniform(-0.5, 0.5, (m - n_near, 3))
    queries = np.concatenate([near, uniform])
    labels = occupancy(shape, t.inverse().apply(queries)).astype(np.float64)
    return cloud, queries, labels


def train_vae(shapes, cfg: VAEConfig, seed: int, steps: int, out_path=None, curve_path=None, log_every=100):
    """Optimize the VAE on a list of analytic shapes; returns (model, curve).

    Deterministic per seed. Raises TrainingDiverged on NaN loss.
    """
    if not shapes:
        raise ValueError("empty training set")
    torch.manual_seed(derive_seed(seed, "init") % 2**63)
    model = TriplaneVAE(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    bank = ShapeBank(shapes, cfg.surface_spacing, min_points=cfg.k_points, seed=seed)
    curve = []
    for step in range(steps):
        rng = derive_rng(seed, "vae_step", step)
        opt.zero_grad()
        total = recon_v = kl_v = 0.0
        for b in range(cfg.batch_shapes):
            idx = int(rng.integers(len(bank)))
            cloud, queries, labels = sample_training_batch(bank, idx, cfg, rng)
            enc = model.encode(torch.as_tensor(cloud, dtype=torch.float32))
            latent = reparameterize(enc, derive_seed(seed, "reparam", step, b))
            logits = model.decode(latent, torch.as_tensor(queries, dtype=torch.float32))
            loss, recon, kl = vae_loss(logits, torch.as_tensor(labels, dtype=torch.float32), enc, cfg.lambda_kl)
            (loss / cfg.batch_shapes).backward()
            total += float(loss.detach()) / cfg.batch_shapes
            recon_v += float(recon.detach()) / cfg.batch_shapes
            kl_v += float(kl.detach()) / cfg.batch_shapes
        if not np.isfinite(total):
            raise TrainingDiverged(f"vae loss became non-finite at step {step}")
        opt.step()
        if step % log_every == 0 or step == steps - 1:
            curve.append((step, recon_v, kl_v, total))
    if curve_path:
        write_loss_curve(curve_path, curve, ["step", "recon", "kl", "total"])
    if out_path:
        save_checkpoint(
            out_path,
            "vae",
            cfg.to_dict(),
            steps,
            {"model": model.state_dict()},
            rng={"master_seed": int(seed), "next_step": int(steps)},
        )
    return model, curve


def load_vae(path) -> TriplaneVAE:
    from ..checkpoint import load_checkpoint

    header, payload = load_checkpoint(path, expect_kind="vae")
    model = TriplaneVAE(VAEConfig.from_dict(header["config"]))
    model.load_state_dict(payload["model"])
    model.eval()
    return model
