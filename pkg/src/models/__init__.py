"""Trainable networks: the hyperbolic autoencoder and the denoiser."""
