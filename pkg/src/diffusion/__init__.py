"""Forward diffusion process and the reverse sampler."""
