"""Reverse process: folded-normal prior, denoising recurrence and decoding to graphs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from sklearn.neighbors import kneighbors_graph

from ..config import Settings, settings as default_settings
from ..geometry.hkmeans import ClusterModel
from ..geometry.manifold import DTYPE, poincare_ball
from ..graphs.graph_data import GraphData, GraphSet, normalized_adjacency
from ..models.autoencoder import HyperbolicAutoencoder
from ..models.denoiser import DenoiserNetwork
from .process import DiffusionSchedule, NoiseMode, Steps, _node_column, draw_noise

logger = logging.getLogger(__name__)


def sample_prior(
    model: ClusterModel,
    n_nodes: int,
    schedule: DiffusionSchedule,
    rng: Optional[torch.Generator] = None,
    noise_mode: NoiseMode = "angular",
) -> Tuple[torch.Tensor, torch.Tensor]:
    """``x_T`` and the cluster of every node.

    Clusters are drawn by the training proportions; coordinates are the cluster
    signs times ``|N(0, 1)|`` (plain Gaussian in ``white`` mode). ``schedule`` is the
    chain this prior starts and must share the clusters' curvature.
    """
    if not math.isclose(schedule.c, model.c):
        raise ValueError(f"Schedule curvature {schedule.c} does not match clusters ({model.c})")
    if n_nodes < 0:
        raise ValueError(f"n_nodes must be nonnegative, got {n_nodes}")
    if n_nodes == 0:
        return torch.zeros(0, model.dim, dtype=DTYPE), torch.zeros(0, dtype=torch.long)
    assignments = torch.multinomial(model.proportions, n_nodes, replacement=True, generator=rng)
    return draw_noise(model.signs_for(assignments), rng, noise_mode), assignments


def predicted_noise(
    x_t: torch.Tensor, x0_hat: torch.Tensor, t: Steps, schedule: DiffusionSchedule
) -> torch.Tensor:
    """Invert the forward map at step ``t`` for the noise; zero where ``abar_t = 1``."""
    signal = _node_column(t, schedule.signal_coef(t))
    scale = _node_column(t, schedule.noise_coef(t))
    residual = x_t - signal * x0_hat
    safe = torch.where(scale > 0, scale, torch.ones_like(scale))
    return torch.where(scale > 0, residual / safe, torch.zeros_like(residual))


def denoise_step(
    x_t: torch.Tensor, x0_hat: torch.Tensor, t: Steps, schedule: DiffusionSchedule
) -> torch.Tensor:
    """``x_{t-1} = (sqrt(abar_{t-1}) + radial(t-1)) x0_hat + sqrt(1 - abar_{t-1}) z_hat``."""
    t = torch.as_tensor(t, dtype=torch.long)
    if bool((t < 1).any()):
        raise ValueError("denoise_step needs t >= 1")
    z_hat = predicted_noise(x_t, x0_hat, t, schedule)
    prev = t - 1
    return _node_column(prev, schedule.signal_coef(prev)) * x0_hat + _node_column(
        prev, schedule.noise_coef(prev)
    ) * z_hat


def knn_edges(x: torch.Tensor, k: int = 4) -> torch.Tensor:
    """Symmetrized k-nearest-neighbour graph of the rows, one column per edge ``i < j``."""
    n = x.shape[0]
    k = min(k, n - 1)
    if k < 1:
        return torch.zeros(2, 0, dtype=torch.long)
    graph = kneighbors_graph(x.detach().numpy(), k, mode="connectivity", include_self=False)
    upper = ((graph + graph.T) > 0).tocoo()
    keep = upper.row < upper.col
    return torch.as_tensor(np.stack([upper.row[keep], upper.col[keep]]), dtype=torch.long)


def _union_adjacency(blocks: List[torch.Tensor], k: int) -> torch.Tensor:
    parts, offset = [], 0
    for x in blocks:
        parts.append(knn_edges(x, k) + offset)
        offset += x.shape[0]
    edge_index = torch.cat(parts, dim=1) if parts else torch.zeros(2, 0, dtype=torch.long)
    return normalized_adjacency(offset, edge_index)


@dataclass
class EmpiricalNodeCounts:
    """Node-count distribution of the training graphs."""

    histogram: Dict[int, int]

    def __post_init__(self):
        self.histogram = {int(n): int(c) for n, c in sorted(self.histogram.items()) if int(c) > 0}
        if not self.histogram:
            raise ValueError("Node-count histogram is empty")

    @classmethod
    def from_graphs(cls, graphs: GraphSet) -> "EmpiricalNodeCounts":
        return cls(graphs.node_count_histogram())

    def sample(self, rng: Optional[torch.Generator] = None) -> int:
        sizes = list(self.histogram)
        weights = torch.tensor([self.histogram[n] for n in sizes], dtype=DTYPE)
        return sizes[int(torch.multinomial(weights, 1, generator=rng))]


def graph_generator(seed: int, index: int) -> torch.Generator:
    """Independent stream for graph ``index`` of a run seeded with ``seed``."""
    state = np.random.SeedSequence([seed, index]).generate_state(1)[0]
    return torch.Generator().manual_seed(int(state))


def _reverse_chain(
    denoiser: DenoiserNetwork,
    x: torch.Tensor,
    sizes: List[int],
    schedule: DiffusionSchedule,
    config: Settings,
    adj: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Run steps ``T..1``; without a fixed ``adj`` the k-NN graph is refreshed periodically."""
    fixed = adj is not None
    for t in range(schedule.T, 0, -1):
        if not fixed and (schedule.T - t) % config.knn_refresh == 0:
            adj = _union_adjacency(list(torch.split(x, sizes)), config.knn)
        x = denoise_step(x, denoiser(x, adj, t), t, schedule)
    return x


def sample_latents(
    denoiser: DenoiserNetwork,
    cluster_model: ClusterModel,
    schedule: DiffusionSchedule,
    sizes: Sequence[int],
    rngs: Sequence[torch.Generator],
    config: Optional[Settings] = None,
    scaffold: Optional[GraphSet] = None,
) -> List[torch.Tensor]:
    """Poincaré latents of one graph per entry of ``sizes``, drawn with ``rngs``.

    With ``scaffold`` the denoiser sees those graphs' adjacency; otherwise it sees a
    k-NN graph of the current latents.
    """
    config = config or default_settings
    if len(rngs) != len(sizes):
        raise ValueError(f"Need one generator per graph, got {len(rngs)} for {len(sizes)}")
    sizes = [int(n) for n in sizes]
    priors, clusters = [], []
    for n, rng in zip(sizes, rngs):
        x_T, assignment = sample_prior(cluster_model, n, schedule, rng, config.noise_mode)
        priors.append(x_T)
        clusters.append(assignment)
    if not sizes:
        return []
    x = torch.cat(priors)
    assignments = torch.cat(clusters)

    adj = None
    if scaffold is not None:
        offsets = np.cumsum([0] + sizes[:-1])
        edge_index = torch.cat(
            [scaffold[i].edge_index() + int(offsets[i]) for i in range(len(sizes))], dim=1
        )
        adj = normalized_adjacency(x.shape[0], edge_index)
    with torch.no_grad():
        if x.shape[0]:
            x = _reverse_chain(denoiser, x, sizes, schedule, config, adj)
        ball = poincare_ball(cluster_model.c)
        h = ball.project(ball.expmap(cluster_model.centroids[assignments], x))
    return list(torch.split(h, sizes))


def generate(
    denoiser: DenoiserNetwork,
    autoencoder: HyperbolicAutoencoder,
    cluster_model: ClusterModel,
    schedule: DiffusionSchedule,
    n_graphs: int,
    node_counts: Optional[EmpiricalNodeCounts] = None,
    seed: Optional[int] = None,
    config: Optional[Settings] = None,
    scaffold: Optional[GraphSet] = None,
) -> GraphSet:
    """Sample ``n_graphs`` graphs by running the reverse chain on one union batch.

    In ``scaffold`` conditioning the denoiser sees the given graphs' adjacency and
    their node counts; otherwise it sees a k-NN graph of the current latents.
    """
    config = config or default_settings
    seed = config.seed if seed is None else seed
    if n_graphs < 0:
        raise ValueError(f"n_graphs must be nonnegative, got {n_graphs}")
    if n_graphs == 0:
        return GraphSet([])
    use_scaffold = config.conditioning == "scaffold"
    if use_scaffold and (scaffold is None or len(scaffold) < n_graphs):
        raise ValueError(f"scaffold conditioning needs at least {n_graphs} scaffold graphs")
    if not use_scaffold and node_counts is None:
        raise ValueError("Unconditional sampling needs a node-count distribution")

    rngs = [graph_generator(seed, idx) for idx in range(n_graphs)]
    if use_scaffold:
        sizes = [scaffold[i].n for i in range(n_graphs)]
    else:
        sizes = [node_counts.sample(rng) for rng in rngs]
    logger.info(f"Sampling {n_graphs} graphs ({sum(sizes)} nodes) over {schedule.T} steps")
    blocks = sample_latents(
        denoiser,
        cluster_model,
        schedule,
        sizes,
        rngs,
        config,
        scaffold=scaffold if use_scaffold else None,
    )
    result = GraphSet(
        [
            GraphData(n=n, edges=autoencoder.decode(block, config.edge_threshold))
            for n, block in zip(sizes, blocks)
        ]
    )
    edges = sum(g.num_edges for g in result)
    logger.info(f"✅ Generated {len(result)} graphs, {edges} edges total")
    return result
