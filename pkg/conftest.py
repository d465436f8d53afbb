"""Shared fixtures for the HypDiff test suite."""

from types import SimpleNamespace

import pytest

from src.config import Settings
from src.diffusion.process import schedule_from_settings
from src.geometry.hkmeans import hkmeans_fit
from src.graphs.generators import gen_community
from src.models.autoencoder import embed_graphs, train_autoencoder
from src.models.denoiser import train_denoiser


@pytest.fixture(scope="session")
def tiny_config() -> Settings:
    """Small models and a short chain so full runs take seconds."""
    return Settings(
        latent_dim=4,
        hidden_dim=8,
        ae_epochs=20,
        edge_dropout=0.0,
        degree_feature_cap=8,
        n_clusters=2,
        kmeans_iters=20,
        timesteps=20,
        denoiser_widths="8,16,8",
        time_dim=8,
        diff_epochs=5,
        snr_trials=16,
        log_every=5,
    )


@pytest.fixture(scope="session")
def community_graphs():
    return gen_community(10, seed=0)


@pytest.fixture(scope="session")
def trained(community_graphs, tiny_config):
    """Autoencoder, clusters, schedule and denoiser fitted on the community graphs."""
    autoencoder = train_autoencoder(community_graphs, tiny_config).model
    _, h = embed_graphs(autoencoder, community_graphs, tiny_config.degree_feature_cap)
    clusters = hkmeans_fit(h, tiny_config.n_clusters, tiny_config.kmeans_iters, seed=0)
    schedule = schedule_from_settings(tiny_config)
    denoiser = train_denoiser(community_graphs, autoencoder, clusters, schedule, tiny_config).model
    return SimpleNamespace(
        autoencoder=autoencoder,
        embeddings=h,
        clusters=clusters,
        schedule=schedule,
        denoiser=denoiser,
    )
