"""Denoising network f(x_t, A, t) -> x_0 and its training loop."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import torch
import torch.nn as nn

from ..config import Settings, settings as default_settings
from ..diffusion.process import DiffusionSchedule, diffusion_loss, forward_diffuse
from ..errors import TrainingDivergedError
from ..geometry.hkmeans import ClusterModel, tangent_coordinates
from ..geometry.manifold import DTYPE
from ..graphs.graph_data import GraphData, GraphSet
from .autoencoder import ACTIVATIONS, HyperbolicAutoencoder, embed_graphs

logger = logging.getLogger(__name__)


def time_embedding(t: Union[int, torch.Tensor], dim: int) -> torch.Tensor:
    """Sinusoidal features with interleaved (sin, cos) pairs; shape ``t.shape + (dim,)``."""
    t = torch.as_tensor(t, dtype=DTYPE)
    if bool((t < 0).any()):
        raise ValueError("Time steps must be nonnegative")
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=DTYPE) * 2 / dim)
    args = t.unsqueeze(-1) * freqs
    emb = torch.stack([torch.sin(args), torch.cos(args)], dim=-1).flatten(-2)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros(*emb.shape[:-1], 1, dtype=DTYPE)], dim=-1)
    return emb


class DenoiserBlock(nn.Module):
    """Node-wise affine map, one learned ``Â`` mixing weight, then the nonlinearity."""

    def __init__(self, in_features: int, out_features: int, activation: str):
        super().__init__()
        self.linear = nn.Linear(in_features, out_features, dtype=DTYPE)
        self.mix = nn.Parameter(torch.full((1,), 0.5, dtype=DTYPE))
        self.act = ACTIVATIONS[activation]
        self.residual = in_features == out_features

    def forward(self, h: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        y = self.linear(h)
        y = self.act(y + self.mix * torch.sparse.mm(adj, y))
        return h + y if self.residual else y


class DenoiserNetwork(nn.Module):
    """Graph-shaped U-profile MLP predicting clean latents from noisy ones."""

    def __init__(
        self,
        latent_dim: int,
        widths: Sequence[int] = (32, 64, 64, 32),
        time_dim: int = 32,
        activation: str = "silu",
    ):
        super().__init__()
        widths = list(widths)
        self.hparams = {
            "latent_dim": latent_dim,
            "widths": widths,
            "time_dim": time_dim,
            "activation": activation,
        }
        self.time_dim = time_dim
        act = ACTIVATIONS[activation]
        self.input_proj = nn.Linear(latent_dim, widths[0], dtype=DTYPE)
        self.time_in = nn.Linear(time_dim, widths[0], dtype=DTYPE)
        self.time_out = nn.Linear(widths[0], widths[0], dtype=DTYPE)
        self.time_act = act
        pairs = list(zip(widths[:-1], widths[1:])) or [(widths[0], widths[0])]
        self.blocks = nn.ModuleList(DenoiserBlock(a, b, activation) for a, b in pairs)
        self.output_proj = nn.Linear(widths[-1], latent_dim, dtype=DTYPE)

    @classmethod
    def from_settings(cls, latent_dim: int, config: Settings) -> "DenoiserNetwork":
        return cls(latent_dim, config.widths, config.time_dim, config.activation)

    def forward(
        self, x_t: torch.Tensor, adj: torch.Tensor, t: Union[int, torch.Tensor]
    ) -> torch.Tensor:
        if x_t.dim() != 2 or x_t.shape[1] != self.input_proj.in_features:
            raise ValueError(
                f"Expected an n x {self.input_proj.in_features} matrix, got {tuple(x_t.shape)}"
            )
        t = torch.as_tensor(t)
        if t.dim() == 0:
            t = t.expand(x_t.shape[0])
        temb = self.time_out(self.time_act(self.time_in(time_embedding(t, self.time_dim))))
        h = self.input_proj(x_t) + temb
        for block in self.blocks:
            h = block(h, adj)
        return self.output_proj(h)


def denoise_predict(
    params: DenoiserNetwork, x_t: torch.Tensor, g: GraphData, t: Union[int, torch.Tensor]
) -> torch.Tensor:
    with torch.no_grad():
        return params(x_t, g.normalized_adjacency(), t)


def snapshot(model: nn.Module) -> Dict[str, torch.Tensor]:
    """Detached copy of the parameters and buffers."""
    return copy.deepcopy(model.state_dict())


@dataclass
class DenoiserResult:
    model: DenoiserNetwork
    loss_trace: List[float] = field(default_factory=list)


def train_denoiser(
    graphs: Union[GraphSet, Sequence[GraphData]],
    encoder: HyperbolicAutoencoder,
    cluster_model: ClusterModel,
    schedule: DiffusionSchedule,
    config: Optional[Settings] = None,
    seed: Optional[int] = None,
) -> DenoiserResult:
    """Learn to predict clean cluster-tangent latents from forward-diffused ones.

    Each epoch draws one step per graph, corrupts the whole union batch and takes
    one optimizer step on the mean squared error.
    """
    config = config or default_settings
    seed = config.seed if seed is None else seed
    batch, h = embed_graphs(encoder, graphs, config.degree_feature_cap)
    assignments = cluster_model.assign(h)
    x0 = tangent_coordinates(h, cluster_model, assignments)
    signs = cluster_model.signs_for(assignments)
    adj = batch.normalized_adjacency()

    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = DenoiserNetwork.from_settings(x0.shape[1], config)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.diff_lr, weight_decay=config.weight_decay
    )

    logger.info(
        f"Training denoiser on {len(batch.graphs)} graphs ({batch.num_nodes} nodes), "
        f"T={schedule.T}, noise={config.noise_mode}, delta={schedule.delta}"
    )
    trace: List[float] = []
    last_state = snapshot(model)
    for epoch in range(config.diff_epochs):
        t_graph = torch.randint(1, schedule.T + 1, (len(batch.graphs),), generator=generator)
        t = t_graph[batch.graph_of_node]
        x_t = forward_diffuse(x0, t, schedule, signs, generator, noise_mode=config.noise_mode)
        loss = diffusion_loss(model(x_t, adj, t), x0)
        if not bool(torch.isfinite(loss)):
            model.load_state_dict(last_state)
            raise TrainingDivergedError(
                f"Denoiser loss became non-finite at epoch {epoch}",
                diagnostics={"epoch": epoch, "last_finite_loss": trace[-1] if trace else None},
                last_state=last_state,
            )
        last_state = snapshot(model)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        trace.append(float(loss))
        if (epoch + 1) % config.log_every == 0:
            logger.info(f"  epoch {epoch + 1}: diffusion loss {trace[-1]:.5f}")

    logger.info(f"✅ Denoiser trained, final loss {trace[-1] if trace else float('nan'):.5f}")
    return DenoiserResult(model=model, loss_trace=trace)
