"""Condition -> latent -> occupancy grid -> marching-cubes mesh."""

from __future__ import annotations

import numpy as np
import torch
from skimage.measure import marching_cubes

from ..vae.model import TriplaneVAE
from .edm import EDMParams, heun_sample


class EmptySurface(RuntimeError):
    """Raised when the decoded field never crosses the isosurface level."""


def decode_occupancy_grid(vae: TriplaneVAE, planes: torch.Tensor, grid_res: int, chunk: int = 32768) -> np.ndarray:
    """Occupancy probabilities on a grid_res^3 node lattice over [-0.5, 0.5]^3."""
    ax = torch.linspace(-0.5, 0.5, grid_res)
    q = torch.stack(torch.meshgrid(ax, ax, ax, indexing="ij"), dim=-1).reshape(-1, 3)
    with torch.no_grad():
        logits = vae.decode(planes, q, chunk=chunk)
    return torch.sigmoid(logits).reshape(grid_res, grid_res, grid_res).numpy()


def mesh_from_grid(prob: np.ndarray, level: float = 0.5):
    """(verts, faces) in canonical coordinates; raises EmptySurface if the
    field never crosses `level`."""
    res = prob.shape[0]
    if prob.min() >= level or prob.max() <= level:
        raise EmptySurface("no surface recovered: field does not cross the isosurface level")
    verts, faces, _, _ = marching_cubes(prob, level=level, spacing=(1.0 / (res - 1),) * 3)
    return verts - 0.5, faces


def reconstruct_from_latent(vae: TriplaneVAE, planes: torch.Tensor, grid_res: int = 64, level: float = 0.5):
    """Decode a latent triplane to a mesh (bypasses the sampler; oracle path)."""
    prob = decode_occupancy_grid(vae, planes, grid_res)
    return mesh_from_grid(prob, level)


def sample_latent(denoiser, cond, params: EDMParams, latent_std: float, seed: int, reso: int, channels: int,
                  trace=None) -> torch.Tensor:
    """Heun-sample a standardized latent and undo the standardization."""
    with torch.no_grad():
        z = heun_sample(denoiser.denoise_fn(cond), (3, channels, reso, reso), params, seed, trace=trace)
    return (z * latent_std).float()


def sample_latents(denoiser, conds, params: EDMParams, latent_std: float, seeds, reso: int, channels: int
                   ) -> torch.Tensor:
    """Batched sampling for a list of conditions; returns (B, 3, C, H, W)."""
    from .edm import heun_sample_batch

    with torch.no_grad():
        z = heun_sample_batch(denoiser.denoise_batch_fn(conds), (3, channels, reso, reso), params, seeds)
    return (z * latent_std).float()


def reconstruct(vae: TriplaneVAE, denoiser, latent_std: float, cond, params: EDMParams, grid_res: int = 64,
                seed: int = 0):
    """Full conditional reconstruction; returns (verts, faces) in canonical space."""
    planes = sample_latent(
        denoiser, cond, params, latent_std, seed, reso=vae.cfg.reso, channels=vae.cfg.latent_channels
    )
    return reconstruct_from_latent(vae, planes, grid_res)
