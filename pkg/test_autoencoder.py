"""Tests for the hyperbolic graph autoencoder."""

import math

import pytest
import torch

from src.errors import TrainingDivergedError
from src.geometry.manifold import DTYPE, ManifoldConfig, PoincarePoint
from src.graphs.graph_data import GraphData, batch_graphs
from src.models.autoencoder import (
    HyperbolicAutoencoder,
    NegativeSampler,
    calibrate_decoder_radius,
    embed_graphs,
    encode,
    fermi_dirac_prob,
    reconstruction_loss,
    train_autoencoder,
)

TRIANGLE = GraphData(n=3, edges=[(0, 1), (1, 2), (0, 2)])


def _model(tiny_config, seed=0):
    torch.manual_seed(seed)
    return HyperbolicAutoencoder.from_settings(tiny_config.degree_feature_cap + 1, tiny_config)


def test_zero_weights_embed_at_origin(tiny_config, community_graphs):
    model = _model(tiny_config)
    with torch.no_grad():
        for p in model.layers.parameters():
            p.zero_()
    h = model.embed_graph(community_graphs[0], tiny_config.degree_feature_cap)
    assert float(h.abs().max()) == 0.0


def test_embeddings_are_permutation_equivariant(tiny_config, community_graphs):
    model = _model(tiny_config)
    g = community_graphs[0]
    perm = torch.randperm(g.n, generator=torch.Generator().manual_seed(1)).tolist()
    with torch.no_grad():
        h = model.embed_graph(g, tiny_config.degree_feature_cap)
        h_perm = model.embed_graph(g.permute(perm), tiny_config.degree_feature_cap)
    assert torch.allclose(h_perm[perm], h, atol=1e-10, rtol=0)


def test_embeddings_stay_inside_the_ball(tiny_config, community_graphs):
    model = _model(tiny_config)
    with torch.no_grad():
        for layer in model.layers:
            layer.linear.weight.mul_(50.0)
    _, h = embed_graphs(model, community_graphs, tiny_config.degree_feature_cap)
    assert bool((h.norm(dim=-1) < 1.0).all())
    points = encode(model, community_graphs[0], tiny_config.degree_feature_cap)
    assert len(points) == community_graphs[0].n


def test_fermi_dirac_probability():
    model = HyperbolicAutoencoder(in_features=2, fd_r=2.0, fd_tau=1.0)
    config = ManifoldConfig(c=1.0, dim=2)
    origin = PoincarePoint([0.0, 0.0], config)
    at_radius = PoincarePoint([math.tanh(1.0), 0.0], config)
    assert fermi_dirac_prob(model, origin, at_radius) == pytest.approx(0.5, abs=1e-12)
    same = fermi_dirac_prob(model, origin, origin)
    assert same == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-12)
    assert fermi_dirac_prob(model, origin, origin) == pytest.approx(0.8808, abs=1e-4)

    radii = torch.linspace(0.0, 0.95, 20, dtype=DTYPE)
    far = torch.stack([radii, torch.zeros_like(radii)], dim=1)
    with torch.no_grad():
        probs = model.edge_probability(torch.zeros(2, dtype=DTYPE), far)
    assert bool((probs[1:] < probs[:-1]).all())


def test_decode_thresholds_probabilities():
    model = HyperbolicAutoencoder(in_features=2, fd_r=1.0, fd_tau=0.1)
    h = torch.tensor([[0.0, 0.0], [0.1, 0.0], [-0.9, 0.0]], dtype=DTYPE)
    assert model.decode(h) == [(0, 1)]
    assert model.decode(h[:1]) == []


def test_zero_epochs_returns_initialization(tiny_config, community_graphs):
    config = tiny_config.model_copy(update={"ae_epochs": 0})
    result = train_autoencoder(community_graphs, config, seed=5)
    expected = _model(tiny_config, seed=5)
    assert result.loss_trace == []
    for name, value in expected.state_dict().items():
        assert torch.equal(result.model.state_dict()[name], value), name


def test_training_is_deterministic(tiny_config, community_graphs):
    a = train_autoencoder(community_graphs, tiny_config, seed=3)
    b = train_autoencoder(community_graphs, tiny_config, seed=3)
    assert a.loss_trace == b.loss_trace
    assert len(a.loss_trace) == tiny_config.ae_epochs


def test_overfits_a_triangle(tiny_config):
    config = tiny_config.model_copy(update={"ae_epochs": 500, "ae_lr": 0.01})
    model = train_autoencoder(TRIANGLE, config, seed=0).model
    with torch.no_grad():
        h = model.embed_graph(TRIANGLE, config.degree_feature_cap)
        i, j = torch.tensor([0, 1, 0]), torch.tensor([1, 2, 2])
        probs = model.edge_probability(h[i], h[j])
    assert bool((probs > 0.9).all())
    assert model.decode(h) == [(0, 1), (0, 2), (1, 2)]


def test_loss_gradient_matches_finite_differences(tiny_config, community_graphs):
    model = _model(tiny_config)
    batch = batch_graphs(list(community_graphs)[:3], tiny_config.degree_feature_cap)
    adj = batch.normalized_adjacency()
    negatives = NegativeSampler(batch).sample(torch.Generator().manual_seed(0))

    def loss_fn():
        h = model.embed(batch.features, adj)
        return reconstruction_loss(model, h, batch.edge_index, negatives)

    model.zero_grad()
    loss_fn().backward()
    eps = 1e-5
    picker = torch.Generator().manual_seed(1)
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
            g = float(grad[idx])
            assert abs(numeric - g) <= 1e-4 * max(abs(g), 1e-4), (name, idx, numeric, g)


def test_loss_decreases_with_fixed_negatives(tiny_config, community_graphs):
    config = tiny_config.model_copy(
        update={"ae_epochs": 60, "ae_lr": 1e-4, "resample_negatives": False, "weight_decay": 0.0}
    )
    trace = train_autoencoder(community_graphs, config, seed=0).loss_trace
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    assert trace[-1] < trace[0]


def test_negative_sampler_draws_non_edges():
    g = GraphData(n=5, edges=[(0, 1), (1, 2)])
    batch = batch_graphs([TRIANGLE, g], feature_cap=4)
    negatives = NegativeSampler(batch).sample(torch.Generator().manual_seed(0))
    assert negatives.shape == (2, 2)
    edges = {tuple(e) for e in batch.edge_index.t().tolist()}
    for i, j in negatives.t().tolist():
        assert 3 <= i < 8 and 3 <= j < 8
        assert (i, j) not in edges


def test_edgeless_graphs_train_with_finite_loss(tiny_config):
    config = tiny_config.model_copy(update={"edge_dropout": 0.02})
    empty = GraphData(n=4, edges=[])
    negatives = NegativeSampler(batch_graphs([empty], 4)).sample(torch.Generator().manual_seed(0))
    assert negatives.shape == (2, 1)

    trace = train_autoencoder(empty, config, seed=0).loss_trace
    assert len(trace) == config.ae_epochs
    assert all(math.isfinite(v) and v > 0 for v in trace)

    single = train_autoencoder(GraphData(n=1, edges=[]), config, seed=0).loss_trace
    assert single == [0.0] * config.ae_epochs


def test_nan_features_raise():
    g = GraphData(n=3, edges=[(0, 1)], features=[[float("nan")], [1.0], [0.0]])
    model = HyperbolicAutoencoder(in_features=1, hidden_dim=4, latent_dim=2)
    with pytest.raises(TrainingDivergedError):
        model.embed_graph(g)


def test_nan_weights_raise(tiny_config, community_graphs):
    model = _model(tiny_config)
    with torch.no_grad():
        model.layers[0].linear.weight[0, 0] = float("nan")
    with pytest.raises(TrainingDivergedError):
        model.embed_graph(community_graphs[0], tiny_config.degree_feature_cap)


def test_radius_calibration_hits_the_edge_target():
    model = HyperbolicAutoencoder(in_features=2, latent_dim=3, fd_r=2.0, fd_tau=0.5)
    gen = torch.Generator().manual_seed(2)
    blocks = [0.8 * torch.rand(n, 3, dtype=DTYPE, generator=gen) - 0.4 for n in (7, 12, 1, 9)]
    pairs = 21 + 66 + 36
    for target in (0, 1, 40, pairs - 1, pairs, pairs + 5):
        calibrate_decoder_radius(model, blocks, target)
        assert sum(len(model.decode(b)) for b in blocks) == min(target, pairs), target

    radius = calibrate_decoder_radius(model, blocks, 40, threshold=0.8)
    assert float(model.fd_r) == radius
    assert sum(len(model.decode(b, threshold=0.8)) for b in blocks) == 40

    before = float(model.fd_r)
    assert calibrate_decoder_radius(model, blocks[2:3], 5) == before
