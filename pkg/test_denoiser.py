"""Tests for the time embedding, the denoising network and its training loop."""

import pytest
import torch

import src.models.denoiser as denoiser_module
from src.diffusion.process import diffusion_loss, forward_diffuse
from src.errors import TrainingDivergedError
from src.geometry.hkmeans import tangent_coordinates
from src.geometry.manifold import DTYPE
from src.graphs.graph_data import GraphData
from src.models.denoiser import (
    DenoiserNetwork,
    denoise_predict,
    time_embedding,
    train_denoiser,
)


def _network(tiny_config, seed=0):
    torch.manual_seed(seed)
    return DenoiserNetwork.from_settings(tiny_config.latent_dim, tiny_config)


def _fit(trained, graphs, config, seed=0):
    return train_denoiser(
        graphs, trained.autoencoder, trained.clusters, trained.schedule, config, seed=seed
    )


def test_time_embedding_at_zero():
    emb = time_embedding(0, 8)
    assert emb.tolist() == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
    odd = time_embedding(torch.tensor([0, 3]), 5)
    assert odd.shape == (2, 5)
    assert odd[:, -1].tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        time_embedding(-1, 8)


def test_time_embedding_separates_steps():
    emb = time_embedding(torch.arange(1001), 32)
    assert torch.equal(emb, time_embedding(torch.arange(1001), 32))
    dist = torch.cdist(emb, emb)
    dist.fill_diagonal_(float("inf"))
    assert float(dist.min()) > 1e-6


def test_zero_output_projection_gives_zero(tiny_config):
    model = _network(tiny_config)
    with torch.no_grad():
        model.output_proj.weight.zero_()
        model.output_proj.bias.zero_()
    g = GraphData(n=4, edges=[(0, 1), (1, 2)])
    out = denoise_predict(model, torch.randn(4, tiny_config.latent_dim, dtype=DTYPE), g, 5)
    assert float(out.abs().max()) == 0.0


def test_network_is_permutation_equivariant(tiny_config):
    model = _network(tiny_config)
    g = GraphData(n=6, edges=[(0, 1), (1, 2), (2, 3), (4, 5), (0, 5)])
    gen = torch.Generator().manual_seed(1)
    x = torch.randn(6, tiny_config.latent_dim, dtype=DTYPE, generator=gen)
    t = torch.tensor([3, 3, 7, 7, 1, 9])
    perm = torch.randperm(6, generator=gen)
    # node i of g becomes node perm[i]
    inverse = torch.argsort(perm)
    out = denoise_predict(model, x, g, t)
    out_perm = denoise_predict(model, x[inverse], g.permute(perm.tolist()), t[inverse])
    assert torch.allclose(out_perm[perm], out, atol=1e-10, rtol=0)


def test_network_handles_large_inputs_and_checks_shape(tiny_config):
    model = _network(tiny_config)
    g = GraphData(n=3, edges=[(0, 1)])
    big = torch.full((3, tiny_config.latent_dim), 1e6, dtype=DTYPE)
    assert bool(torch.isfinite(denoise_predict(model, big, g, 1000)).all())
    with pytest.raises(ValueError):
        model(torch.zeros(3, tiny_config.latent_dim + 1, dtype=DTYPE), g.normalized_adjacency(), 1)


def test_single_width_network_keeps_one_block():
    model = DenoiserNetwork(latent_dim=3, widths=[8], time_dim=4)
    assert len(model.blocks) == 1
    assert model.blocks[0].residual


def test_zero_epochs_returns_initialization(trained, community_graphs, tiny_config):
    config = tiny_config.model_copy(update={"diff_epochs": 0})
    result = _fit(trained, community_graphs, config, seed=4)
    expected = _network(tiny_config, seed=4)
    assert result.loss_trace == []
    for name, value in expected.state_dict().items():
        assert torch.equal(result.model.state_dict()[name], value), name


def test_training_is_deterministic(trained, community_graphs, tiny_config):
    a = _fit(trained, community_graphs, tiny_config, seed=2)
    b = _fit(trained, community_graphs, tiny_config, seed=2)
    assert a.loss_trace == b.loss_trace
    assert len(a.loss_trace) == tiny_config.diff_epochs
    assert all(torch.isfinite(torch.tensor(a.loss_trace)))


def test_loss_gradient_matches_finite_differences(tiny_config):
    model = _network(tiny_config)
    g = GraphData(n=5, edges=[(0, 1), (1, 2), (3, 4)])
    adj = g.normalized_adjacency()
    gen = torch.Generator().manual_seed(3)
    x_t = torch.randn(5, tiny_config.latent_dim, dtype=DTYPE, generator=gen)
    x0 = torch.randn(5, tiny_config.latent_dim, dtype=DTYPE, generator=gen)
    t = torch.tensor([4, 4, 4, 9, 9])

    def loss_fn():
        return diffusion_loss(model(x_t, adj, t), x0)

    model.zero_grad()
    loss_fn().backward()
    eps = 1e-5
    picker = torch.Generator().manual_seed(4)
    for name, param in model.named_parameters():
        flat = param.data.view(-1)
        grad = param.grad.view(-1)
        for idx in torch.randperm(flat.numel(), generator=picker)[:10].tolist():
            original = float(flat[idx])
            with torch.no_grad():
                flat[idx] = original + eps
                up = float(loss_fn())
                flat[idx] = original - eps
                down = float(loss_fn())
                flat[idx] = original
            numeric = (up - down) / (2 * eps)
            g_val = float(grad[idx])
            assert abs(numeric - g_val) <= 1e-4 * max(abs(g_val), 1e-4), (name, idx)


def test_non_finite_loss_restores_last_finite_state(
    trained, community_graphs, tiny_config, monkeypatch
):
    one_epoch = _fit(trained, community_graphs, tiny_config.model_copy(update={"diff_epochs": 1}))
    calls = {"n": 0}

    def flaky_loss(predicted, target):
        calls["n"] += 1
        loss = diffusion_loss(predicted, target)
        return loss * float("nan") if calls["n"] == 3 else loss

    monkeypatch.setattr(denoiser_module, "diffusion_loss", flaky_loss)
    with pytest.raises(TrainingDivergedError) as info:
        _fit(trained, community_graphs, tiny_config)

    assert info.value.diagnostics["epoch"] == 2
    assert info.value.diagnostics["last_finite_loss"] is not None
    state = info.value.last_state
    for name, value in one_epoch.model.state_dict().items():
        assert torch.equal(state[name], value), name


def test_loss_is_unchanged_by_relabelling_a_graph(trained, community_graphs, tiny_config):
    g = community_graphs[0]
    gen = torch.Generator().manual_seed(5)
    perm = torch.randperm(g.n, generator=gen)
    inverse = torch.argsort(perm)
    t = torch.full((g.n,), 7)
    noise = torch.randn(g.n, tiny_config.latent_dim, dtype=DTYPE, generator=gen)

    def loss_for(graph, z):
        with torch.no_grad():
            h = trained.autoencoder.embed_graph(graph, tiny_config.degree_feature_cap)
            assignments = trained.clusters.assign(h)
            x0 = tangent_coordinates(h, trained.clusters, assignments)
            signs = trained.clusters.signs_for(assignments)
            x_t = forward_diffuse(x0, t, trained.schedule, signs, noise=z)
            predicted = denoise_predict(trained.denoiser, x_t, graph, t)
            return float(diffusion_loss(predicted, x0))

    assert abs(loss_for(g.permute(perm.tolist()), noise[inverse]) - loss_for(g, noise)) < 1e-9


@pytest.mark.slow
def test_overfits_a_single_graph(trained, tiny_config):
    ring = [(i, (i + 1) % 12) for i in range(12)]
    g = GraphData(n=12, edges=ring + [(0, 3), (0, 6), (2, 9), (5, 10)])
    config = tiny_config.model_copy(update={"diff_epochs": 5000, "weight_decay": 0.0})
    trace = _fit(trained, [g], config).loss_trace
    assert sum(trace[-100:]) / 100 < 0.05


@pytest.mark.slow
def test_training_reduces_loss(trained, community_graphs, tiny_config):
    config = tiny_config.model_copy(update={"diff_epochs": 1500, "diff_lr": 3e-3})
    trace = _fit(trained, community_graphs, config).loss_trace
    head = sum(trace[:50]) / 50
    tail = sum(trace[-50:]) / 50
    assert tail < 0.5 * head
