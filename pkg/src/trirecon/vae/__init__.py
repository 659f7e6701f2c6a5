from .layers import (
    PointPlaneEncoder,
    TriplaneConv,
    TriplaneResBlock,
    TriplaneUNet,
    aware_conv3d,
    cross_plane_stack,
    plane_cell_index,
    scatter_max_planes,
)
from .model import EncoderOutput, TriplaneLatent, TriplaneVAE, VAEConfig, kl_divergence, reparameterize, vae_loss
from .train import ShapeBank, TrainingDiverged, load_vae, sample_training_batch, train_vae

__all__ = [
    "EncoderOutput",
    "PointPlaneEncoder",
    "ShapeBank",
    "TrainingDiverged",
    "TriplaneConv",
    "TriplaneLatent",
    "TriplaneResBlock",
    "TriplaneUNet",
    "TriplaneVAE",
    "VAEConfig",
    "aware_conv3d",
    "cross_plane_stack",
    "kl_divergence",
    "load_vae",
    "plane_cell_index",
    "reparameterize",
    "sample_training_batch",
    "scatter_max_planes",
    "train_vae",
    "vae_loss",
]
