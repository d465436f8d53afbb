"""HypDiff - hyperbolic geometric latent diffusion for graph generation."""

__version__ = "1.0.0"
__author__ = "Martin"
__description__ = "HypDiff - hyperbolic geometric latent diffusion for graph generation"
