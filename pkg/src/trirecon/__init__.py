"""Desk-scale cross-modal shape reconstruction and occupancy-guided detection.

Subpackages:
    geom      analytic geometry kernel and exact occupancy oracle
    synth     procedural scene/observation generator and dataset writer
    vae       triplane variational auto-encoder over occupancy fields
    diffusion latent triplane diffusion (continuous-sigma formulation)
    hfa       hybrid point/image feature aggregation layers
    occgod    scene occupancy labels and the occupancy-guided toy detector
    metrics   reconstruction and detection evaluation stack
"""

__version__ = "0.1.0"
