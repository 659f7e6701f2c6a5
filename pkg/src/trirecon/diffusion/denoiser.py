"""Preconditioned triplane denoiser: UNet with per-resolution aggregation layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..hfa import AttentionConfig, ConditionTensors, DirectProjectionLayer, HFALayer, ImageEncoder
from ..vae.layers import TriplaneUNet
from .edm import EDMParams


@dataclass
class DenoiserConfig:
    base_width: int = 16
    depth: int = 2
    emb_dim: int = 32
    c_img: int = 16
    img_width: int = 16
    attn: AttentionConfig = field(default_factory=AttentionConfig)
    point_feat: int = 32
    dropout_partial: float = 0.1
    dropout_images: float = 0.1
    conditioning: str = "hfa"  # "hfa" | "direct" (the projection-baseline ablation)

    def to_dict(self):
        d = dict(self.__dict__)
        d["attn"] = self.attn.to_dict()
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        if "attn" in d:
            d["attn"] = AttentionConfig(**d["attn"])
        return DenoiserConfig(**d)


class NoiseEmbedding(nn.Module):
    """Fourier features of c_noise followed by a small MLP."""

    def __init__(self, dim):
        super().__init__()
        self.dim = dim
        half = dim // 2
        freqs = torch.exp(torch.linspace(0.0, math.log(100.0), half))
        self.register_buffer("freqs", freqs)
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, c_noise: torch.Tensor) -> torch.Tensor:
        ang = c_noise[:, None] * self.freqs[None, :]
        feats = torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)
        return self.mlp(feats)


class TriplaneDenoiser(nn.Module):
    """D(x, sigma, cond) over latent triplanes (B, 3, C, H, W)."""

    def __init__(self, latent_channels: int, cfg: DenoiserConfig, params: EDMParams):
        super().__init__()
        self.cfg = cfg
        self.params = params
        layer_cls = HFALayer if cfg.conditioning == "hfa" else DirectProjectionLayer
        widths = [cfg.base_width * min(2**d, 4) for d in range(cfg.depth + 1)]
        cond_layers = nn.ModuleList(
            [layer_cls(widths[d], cfg.c_img, cfg.attn, cfg.point_feat) for d in range(cfg.depth + 1)]
        )
        self.unet = TriplaneUNet(
            latent_channels, latent_channels, cfg.base_width, cfg.depth, emb_dim=cfg.emb_dim, cond_layers=cond_layers
        )
        self.embed = NoiseEmbedding(cfg.emb_dim)
        self.image_encoder = ImageEncoder(cfg.c_img, cfg.img_width)

    def prepare_conditions(self, conds):
        """Encode every element's views once; returns the per-element pack the
        aggregation layers consume: (cond, encoded view feats, image size)."""
        pack = []
        for cond in conds:
            if cond is None:
                pack.append((None, None, None))
            elif cond.images is None or cond.n_views == 0:
                pack.append((cond, None, None))
            else:
                feats = self.image_encoder(cond.images)
                pack.append((cond, feats, tuple(cond.images.shape[-2:])))
        return pack

    def net(self, x: torch.Tensor, c_noise: torch.Tensor, cond_pack) -> torch.Tensor:
        return self.unet(x, emb=self.embed(c_noise), cond=cond_pack)

    def forward(self, x: torch.Tensor, sigma, conds=None) -> torch.Tensor:
        """x: (B, 3, C, H, W); sigma: scalar or (B,); conds: list of
        ConditionTensors|None, length B."""
        if x.ndim != 5:
            raise ValueError("denoiser expects (B, 3, C, H, W)")
        if conds is None:
            conds = [None] * x.shape[0]
        pack = self.prepare_conditions(conds)
        return self.forward_prepared(x, sigma, pack)

    def forward_prepared(self, x: torch.Tensor, sigma, pack) -> torch.Tensor:
        """Forward with conditions already encoded (see prepare_conditions)."""
        sigma = torch.as_tensor(sigma, dtype=x.dtype).reshape(-1)
        if sigma.numel() == 1:
            sigma = sigma.expand(x.shape[0])
        sd = self.params.sigma_data
        den = sigma**2 + sd**2
        bshape = (-1, 1, 1, 1, 1)
        c_skip = (sd**2 / den).reshape(bshape)
        c_out = (sigma * sd / den.sqrt()).reshape(bshape)
        c_in = (1.0 / den.sqrt()).reshape(bshape)
        c_noise = torch.log(sigma) / 4.0
        f = self.net(c_in * x, c_noise, pack)
        return c_skip * x + c_out * f

    def denoise_fn(self, cond: ConditionTensors | None):
        """Bind one condition for the sampler: f(x (3,C,H,W), sigma) -> same shape.

        The condition is encoded once and reused across sampler steps. Casts to
        the network dtype and back, so the float64 sampler state stays full
        precision."""
        dtype = next(self.parameters()).dtype
        pack = self.prepare_conditions([cond])

        def fn(x, sigma):
            out = self.forward_prepared(x.to(dtype).unsqueeze(0), sigma, pack).squeeze(0)
            return out.to(x.dtype)

        return fn

    def denoise_batch_fn(self, conds):
        """Batched sampler binding: f(x (B,3,C,H,W), sigma) -> same shape."""
        dtype = next(self.parameters()).dtype
        pack = self.prepare_conditions(conds)

        def fn(x, sigma):
            return self.forward_prepared(x.to(dtype), sigma, pack).to(x.dtype)

        return fn
