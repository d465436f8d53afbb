"""Hyperbolic graph autoencoder: tangent-space graph convolutions and a Fermi-Dirac decoder."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import Settings, settings as default_settings
from ..errors import TrainingDivergedError
from ..geometry.manifold import DTYPE, ManifoldConfig, PoincarePoint, poincare_ball
from ..graphs.graph_data import GraphBatch, GraphData, GraphSet, batch_graphs

logger = logging.getLogger(__name__)

ACTIVATIONS: Dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "silu": F.silu,
    "relu": F.relu,
    "tanh": torch.tanh,
}


class HyperbolicGraphConvolution(nn.Module):
    """Affine map and ``Â`` aggregation of origin-tangent features."""

    def __init__(self, in_features: int, out_features: int, act: Optional[Callable] = None):
        super().__init__()
        self.linear = nn.Linear(in_features, out_features, dtype=DTYPE)
        self.act = act

    def forward(self, tangent: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        h = torch.sparse.mm(adj, self.linear(tangent))
        return self.act(h) if self.act is not None else h


class HyperbolicAutoencoder(nn.Module):
    """Graph encoder into the Poincaré ball plus a distance-based edge decoder."""

    def __init__(
        self,
        in_features: int,
        hidden_dim: int = 32,
        latent_dim: int = 16,
        num_layers: int = 2,
        c: float = 1.0,
        fd_r: float = 2.0,
        fd_tau: float = 1.0,
        activation: str = "silu",
    ):
        super().__init__()
        self.hparams = {
            "in_features": in_features,
            "hidden_dim": hidden_dim,
            "latent_dim": latent_dim,
            "num_layers": num_layers,
            "c": c,
            "activation": activation,
        }
        act = ACTIVATIONS[activation]
        dims = [in_features] + [hidden_dim] * (num_layers - 1) + [latent_dim]
        self.layers = nn.ModuleList(
            HyperbolicGraphConvolution(dims[i], dims[i + 1], act if i < num_layers - 1 else None)
            for i in range(num_layers)
        )
        self.fd_r = nn.Parameter(torch.tensor(float(fd_r), dtype=DTYPE))
        self.log_tau = nn.Parameter(torch.tensor(math.log(fd_tau), dtype=DTYPE))
        self.ball = poincare_ball(float(c))
        self.clamp_events = 0

    @classmethod
    def from_settings(cls, in_features: int, config: Settings) -> "HyperbolicAutoencoder":
        return cls(
            in_features=in_features,
            hidden_dim=config.hidden_dim,
            latent_dim=config.latent_dim,
            num_layers=config.ae_layers,
            c=config.curvature,
            fd_r=config.fd_r,
            fd_tau=config.fd_tau,
            activation=config.activation,
        )

    @property
    def fd_tau(self) -> torch.Tensor:
        return self.log_tau.exp()

    def _to_ball(self, tangent: torch.Tensor) -> torch.Tensor:
        h = self.ball.expmap0(tangent)
        self.clamp_events += self.ball.boundary_violations(h)
        return self.ball.project(h)

    def embed(self, features: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        """Poincaré embeddings (``n x latent_dim``) of one graph or a batch union."""
        tangent = features
        for i, layer in enumerate(self.layers):
            tangent = layer(tangent, adj)
            h = self._to_ball(tangent)
            if i < len(self.layers) - 1:
                tangent = self.ball.logmap0(h)
        if not bool(torch.isfinite(h).all()):
            raise TrainingDivergedError("Encoder produced non-finite activations")
        return h

    def embed_graph(self, g: GraphData, feature_cap: int = 32) -> torch.Tensor:
        return self.embed(g.node_features(feature_cap), g.normalized_adjacency())

    def edge_logits(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        """``(r - d) / tau``; the Fermi-Dirac probability is its sigmoid."""
        return (self.fd_r - self.ball.distance(x, y)) / self.fd_tau

    def edge_probability(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.edge_logits(x, y))

    def decode(self, h: torch.Tensor, threshold: float = 0.5) -> List[tuple[int, int]]:
        """Edges ``i < j`` whose probability exceeds ``threshold``."""
        n = h.shape[0]
        if n < 2:
            return []
        i, j = torch.triu_indices(n, n, offset=1)
        with torch.no_grad():
            probs = self.edge_probability(h[i], h[j])
        keep = probs > threshold
        return list(zip(i[keep].tolist(), j[keep].tolist()))


def encode(
    params: HyperbolicAutoencoder, g: GraphData, feature_cap: int = 32
) -> List[PoincarePoint]:
    config = ManifoldConfig(c=params.ball.c, dim=params.hparams["latent_dim"])
    with torch.no_grad():
        h = params.embed_graph(g, feature_cap)
    return [PoincarePoint(row, config) for row in h]


def fermi_dirac_prob(params: HyperbolicAutoencoder, x: PoincarePoint, y: PoincarePoint) -> float:
    with torch.no_grad():
        return float(params.edge_probability(x.coords, y.coords))


def calibrate_decoder_radius(
    model: HyperbolicAutoencoder,
    blocks: Sequence[torch.Tensor],
    target_edges: int,
    threshold: float = 0.5,
) -> float:
    """Move ``fd_r`` so that decoding ``blocks`` at ``threshold`` gives ``target_edges`` edges.

    Pairs are ranked by distance within each block and the distance cut is placed
    halfway between the last kept pair and the first dropped one. Returns the new radius.
    """
    dists = []
    for h in blocks:
        if h.shape[0] < 2:
            continue
        i, j = torch.triu_indices(h.shape[0], h.shape[0], offset=1)
        with torch.no_grad():
            dists.append(model.ball.distance(h[i], h[j]))
    if not dists:
        return float(model.fd_r)
    d = torch.sort(torch.cat(dists)).values
    k = min(max(int(target_edges), 0), d.numel())
    if k == 0:
        cut = float(d[0]) / 2
    elif k == d.numel():
        cut = float(d[-1]) + 1.0
    else:
        cut = (float(d[k - 1]) + float(d[k])) / 2
    radius = cut + float(model.fd_tau) * math.log(threshold / (1 - threshold))
    with torch.no_grad():
        model.fd_r.fill_(radius)
    return radius


def reconstruction_loss(
    model: HyperbolicAutoencoder, h: torch.Tensor, positives: torch.Tensor, negatives: torch.Tensor
) -> torch.Tensor:
    """Binary cross-entropy of Fermi-Dirac logits over edges and sampled non-edges."""
    pairs = torch.cat([positives, negatives], dim=1)
    if pairs.shape[1] == 0:
        return h.sum() * 0.0
    targets = torch.cat(
        [torch.ones(positives.shape[1], dtype=DTYPE), torch.zeros(negatives.shape[1], dtype=DTYPE)]
    )
    logits = model.edge_logits(h[pairs[0]], h[pairs[1]])
    return F.binary_cross_entropy_with_logits(logits, targets)


class NegativeSampler:
    """Uniform non-edges per graph, as many as the graph has edges and at least one."""

    def __init__(self, batch: GraphBatch):
        self.pools = []
        for g, offset in zip(batch.graphs, batch.offsets):
            non_edges = g.non_edges()
            pool = torch.tensor(non_edges, dtype=torch.long).t() + offset if non_edges else None
            self.pools.append((pool, max(g.num_edges, 1)))

    def sample(self, generator: torch.Generator) -> torch.Tensor:
        parts = []
        for pool, wanted in self.pools:
            if pool is None:
                continue
            take = min(wanted, pool.shape[1])
            idx = torch.randperm(pool.shape[1], generator=generator)[:take]
            parts.append(pool[:, idx])
        return torch.cat(parts, dim=1) if parts else torch.zeros(2, 0, dtype=torch.long)


@dataclass
class AutoencoderResult:
    model: HyperbolicAutoencoder
    loss_trace: List[float] = field(default_factory=list)
    clamp_events: int = 0


def _as_graph_list(graphs: Union[GraphData, GraphSet, Sequence[GraphData]]) -> List[GraphData]:
    if isinstance(graphs, GraphData):
        return [graphs]
    return list(graphs)


def train_autoencoder(
    graphs: Union[GraphData, GraphSet, Sequence[GraphData]],
    config: Optional[Settings] = None,
    seed: Optional[int] = None,
) -> AutoencoderResult:
    """Fit the encoder and decoder by edge reconstruction on one graph or a set.

    The set is trained as a disjoint union with one optimizer step per epoch.
    """
    config = config or default_settings
    seed = config.seed if seed is None else seed
    graph_list = _as_graph_list(graphs)
    batch = batch_graphs(graph_list, config.degree_feature_cap)

    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = HyperbolicAutoencoder.from_settings(batch.features.shape[1], config)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.ae_lr, weight_decay=config.weight_decay
    )
    sampler = NegativeSampler(batch)
    positives = batch.edge_index
    negatives = sampler.sample(generator)
    n_edges = positives.shape[1]

    logger.info(
        f"Training autoencoder on {len(graph_list)} graphs "
        f"({batch.num_nodes} nodes, {n_edges} edges) for {config.ae_epochs} epochs"
    )
    trace: List[float] = []
    model.clamp_events = 0
    for epoch in range(config.ae_epochs):
        if config.resample_negatives and epoch > 0:
            negatives = sampler.sample(generator)
        keep = None
        if config.edge_dropout > 0 and n_edges:
            keep = torch.rand(n_edges, dtype=DTYPE, generator=generator) >= config.edge_dropout
        h = model.embed(batch.features, batch.normalized_adjacency(keep))
        loss = reconstruction_loss(model, h, positives, negatives)
        if not bool(torch.isfinite(loss)):
            raise TrainingDivergedError(
                f"Autoencoder loss became non-finite at epoch {epoch}",
                diagnostics={
                    "epoch": epoch,
                    "last_finite_loss": trace[-1] if trace else None,
                    "fd_r": float(model.fd_r),
                    "fd_tau": float(model.fd_tau),
                },
            )
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        trace.append(float(loss))
        if (epoch + 1) % config.log_every == 0:
            logger.info(f"  epoch {epoch + 1}: reconstruction loss {trace[-1]:.5f}")

    if model.clamp_events:
        logger.warning(f"⚠️ Ball clamping triggered {model.clamp_events} times during training")
    logger.info(f"✅ Autoencoder trained, final loss {trace[-1] if trace else float('nan'):.5f}")
    return AutoencoderResult(model=model, loss_trace=trace, clamp_events=model.clamp_events)


def embed_graphs(
    model: HyperbolicAutoencoder, graphs: Iterable[GraphData], feature_cap: int
) -> tuple[GraphBatch, torch.Tensor]:
    """Union batch of ``graphs`` and the Poincaré embedding of every node."""
    batch = batch_graphs(graphs, feature_cap)
    with torch.no_grad():
        h = model.embed(batch.features, batch.normalized_adjacency())
    return batch, h
