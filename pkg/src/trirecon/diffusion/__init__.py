from .edm import (
    EDMParams,
    add_noise,
    diffusion_loss,
    heun_sample,
    karras_schedule,
    loss_weight,
    precondition,
    sample_sigma,
)
from .denoiser import DenoiserConfig, NoiseEmbedding, TriplaneDenoiser
from .train import encode_bundles, estimate_latent_std, load_denoiser, train_diffusion
from .reconstruct import (
    EmptySurface,
    decode_occupancy_grid,
    mesh_from_grid,
    reconstruct,
    reconstruct_from_latent,
    sample_latent,
)

__all__ = [
    "DenoiserConfig",
    "EDMParams",
    "EmptySurface",
    "NoiseEmbedding",
    "TriplaneDenoiser",
    "add_noise",
    "decode_occupancy_grid",
    "diffusion_loss",
    "encode_bundles",
    "estimate_latent_std",
    "heun_sample",
    "karras_schedule",
    "load_denoiser",
    "loss_weight",
    "mesh_from_grid",
    "precondition",
    "reconstruct",
    "reconstruct_from_latent",
    "sample_latent",
    "sample_sigma",
    "train_diffusion",
]
