"""Triplane VAE: point cloud -> latent triplane -> per-point occupancy logits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from ..geom.triplane import sample_planes
from .layers import PointPlaneEncoder, TriplaneUNet


@dataclass
class TriplaneLatent:
    """Latent triplane. `planes` is (3, C, H, W); `values` views it as HxWx3xC."""

    planes: torch.Tensor

    def __post_init__(self):
        if self.planes.ndim != 4 or self.planes.shape[0] != 3:
            raise ValueError("planes must be (3, C, H, W)")
        if self.planes.shape[-2] != self.planes.shape[-1]:
            raise ValueError("planes must be square")
        if not torch.isfinite(self.planes).all():
            raise ValueError("latent must be finite")

    @property
    def values(self) -> np.ndarray:
        return self.planes.detach().permute(2, 3, 0, 1).cpu().numpy()

    @staticmethod
    def from_values(values: np.ndarray) -> "TriplaneLatent":
        t = torch.as_tensor(np.asarray(values), dtype=torch.float32)
        return TriplaneLatent(t.permute(2, 3, 0, 1).contiguous())


@dataclass
class EncoderOutput:
    mu: torch.Tensor  # (3, C, H, W)
    sigma: torch.Tensor  # (3, C, H, W), positive (exp of predicted log-std)


@dataclass
class VAEConfig:
    reso: int = 32  # H = W
    latent_channels: int = 8
    base_width: int = 16
    depth: int = 3
    point_feat: int = 32
    decoder_hidden: int = 64
    k_points: int = 20000
    queries_per_step: int = 2048
    lambda_kl: float = 0.025
    lr: float = 2e-3
    batch_shapes: int = 1
    augment: bool = True
    aug_rot_deg: float = 10.0
    aug_scale: tuple = (0.8, 1.1)
    aug_shift: float = 0.05
    near_surface_sigma: float = 0.02
    surface_spacing: float = 0.01

    def to_dict(self):
        d = dict(self.__dict__)
        d["aug_scale"] = list(self.aug_scale)
        return d

    @staticmethod
    def from_dict(d):
        cfg = VAEConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise KeyError(f"unknown vae config key {k!r}")
            setattr(cfg, k, tuple(v) if k == "aug_scale" else v)
        return cfg


class TriplaneVAE(nn.Module):
    def __init__(self, cfg: VAEConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.latent_channels
        self.point_encoder = PointPlaneEncoder(3, cfg.point_feat, empty_embedding=True)
        self.encoder_unet = TriplaneUNet(cfg.point_feat, 2 * c, cfg.base_width, cfg.depth)
        self.decoder_unet = TriplaneUNet(c, cfg.decoder_hidden, cfg.base_width, cfg.depth)
        self.occ_mlp = nn.Sequential(
            nn.Linear(cfg.decoder_hidden, cfg.decoder_hidden),
            nn.SiLU(),
            nn.Linear(cfg.decoder_hidden, cfg.decoder_hidden),
            nn.SiLU(),
            nn.Linear(cfg.decoder_hidden, 1),
        )

    def encode(self, points: torch.Tensor) -> EncoderOutput:
        """points: (K, 3) canonical-space surface samples."""
        if points.ndim != 2 or len(points) == 0:
            raise ValueError("encode expects a non-empty (K, 3) cloud")
        pooled, _ = self.point_encoder(points, self.cfg.reso)
        raw = self.encoder_unet(pooled.unsqueeze(0)).squeeze(0)
        mu, log_sigma = raw.chunk(2, dim=1)
        return EncoderOutput(mu=mu, sigma=torch.exp(log_sigma.clamp(-10, 5)))

    def refine(self, planes: torch.Tensor) -> torch.Tensor:
        """Decoder-side UNet refinement of a latent triplane (3, C, H, W)."""
        return self.decoder_unet(planes.unsqueeze(0)).squeeze(0)

    def decode(self, latent, queries: torch.Tensor, chunk: int = 16384) -> torch.Tensor:
        """Occupancy logits at (M, 3) canonical query points."""
        planes = latent.planes if isinstance(latent, TriplaneLatent) else latent
        if queries.ndim != 2:
            raise ValueError("queries must be (M, 3)")
        if len(queries) == 0:
            return planes.new_zeros((0,))
        refined = self.refine(planes)
        outs = []
        for i in range(0, len(queries), chunk):
            q = queries[i : i + chunk]
            feats = sample_planes(refined, q).sum(dim=1)  # sum over the three planes
            outs.append(self.occ_mlp(feats).squeeze(-1))
        return torch.cat(outs)


def reparameterize(out: EncoderOutput, seed: int) -> TriplaneLatent:
    """T = mu + sigma * eps with eps ~ N(0, I), deterministic per seed."""
    gen = torch.Generator().manual_seed(int(seed) % 2**63)
    eps = torch.randn(out.mu.shape, generator=gen, dtype=out.mu.dtype)
    return TriplaneLatent(out.mu + out.sigma * eps)


def kl_divergence(out: EncoderOutput) -> torch.Tensor:
    """Mean elementwise KL( N(mu, sigma^2) || N(0, 1) ); always >= 0."""
    return 0.5 * (out.mu**2 + out.sigma**2 - 2 * torch.log(out.sigma) - 1.0).mean()


def vae_loss(logits: torch.Tensor, gt_occ: torch.Tensor, out: EncoderOutput, lambda_kl: float = 0.025):
    """Squared error on occupancy probabilities plus weighted KL.

    Returns (total, recon, kl) scalars.
    """
    if logits.shape != gt_occ.shape:
        raise ValueError("logits and gt_occ must have the same length")
    recon = (torch.sigmoid(logits) - gt_occ).square().mean()
    kl = kl_divergence(out)
    return recon + lambda_kl * kl, recon, kl
