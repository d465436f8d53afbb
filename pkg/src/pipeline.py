"""End-to-end orchestration behind the command-line interface."""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import plotly.graph_objects as go
import torch

from .config import Settings, settings as default_settings
from .diffusion.process import DiffusionSchedule, make_schedule, schedule_from_settings, snr_table
from .diffusion.sampler import EmpiricalNodeCounts, generate, graph_generator, sample_latents
from .errors import CheckpointError
from .geometry.hkmeans import ClusterModel, hkmeans_fit, tangent_coordinates
from .geometry.manifold import DTYPE
from .graphs.generators import generate_dataset
from .graphs.graph_data import GraphSet
from .graphs.metrics import MMDReport, evaluate
from .models.autoencoder import (
    HyperbolicAutoencoder,
    calibrate_decoder_radius,
    embed_graphs,
    train_autoencoder,
)
from .models.denoiser import DenoiserNetwork, train_denoiser
from .storage.checkpoint import Checkpoint, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

SCHEDULE_KEYS = ["curvature", "delta", "T", "T0", "beta_start", "beta_end"]
DIFFUSION_KEYS = SCHEDULE_KEYS + ["k", "noise_mode"]


def cluster_metadata(model: ClusterModel) -> Dict:
    return {
        "k": model.k,
        "centroids": model.centroids.tolist(),
        "sign_matrix": model.sign_matrix.tolist(),
        "proportions": model.proportions.tolist(),
    }


def cluster_from_metadata(meta: Dict) -> ClusterModel:
    return ClusterModel(
        k=int(meta["k"]),
        c=float(meta["curvature"]),
        centroids=torch.tensor(meta["centroids"], dtype=DTYPE),
        assignments=torch.zeros(0, dtype=torch.long),
        sign_matrix=torch.tensor(meta["sign_matrix"], dtype=DTYPE),
        proportions=torch.tensor(meta["proportions"], dtype=DTYPE),
    )


def schedule_from_metadata(meta: Dict) -> DiffusionSchedule:
    return make_schedule(
        T=int(meta["T"]),
        beta_start=float(meta["beta_start"]),
        beta_end=float(meta["beta_end"]),
        delta=float(meta["delta"]),
        T0=float(meta["T0"]),
        c=float(meta["curvature"]),
    )


def encoder_from_checkpoint(ckpt: Checkpoint) -> HyperbolicAutoencoder:
    ckpt.require("encoder")
    model = HyperbolicAutoencoder(**ckpt.metadata["encoder"])
    try:
        model.load_state_dict(ckpt.section("encoder"))
    except RuntimeError as e:
        raise CheckpointError(f"Encoder tensors do not match their hyperparameters: {e}") from e
    return model


def denoiser_from_checkpoint(ckpt: Checkpoint) -> DenoiserNetwork:
    ckpt.require("denoiser")
    model = DenoiserNetwork(**ckpt.metadata["denoiser"])
    try:
        model.load_state_dict(ckpt.section("denoiser"))
    except RuntimeError as e:
        raise CheckpointError(f"Denoiser tensors do not match their hyperparameters: {e}") from e
    return model


class HypDiffPipeline:
    """Runs each stage of the two-stage training and sampling workflow."""

    def __init__(self, config: Optional[Settings] = None):
        self.config = config or default_settings

    def gen_data(self, dataset: str, count: int, out: str | Path) -> GraphSet:
        graphs = generate_dataset(dataset, count, seed=self.config.seed)
        graphs.to_jsonl(out)
        return graphs

    def train_ae(self, graphs_path: str | Path, out: str | Path) -> HyperbolicAutoencoder:
        graphs = GraphSet.from_jsonl(graphs_path)
        result = train_autoencoder(graphs, self.config)
        ckpt = Checkpoint(metadata=self._encoder_metadata(result.model, graphs))
        ckpt.add_section("encoder", result.model.state_dict())
        save_checkpoint(out, ckpt)
        return result.model

    def train_diff(
        self, graphs_path: str | Path, ae_checkpoint: str | Path, out: str | Path
    ) -> Checkpoint:
        graphs = GraphSet.from_jsonl(graphs_path)
        ckpt = load_checkpoint(ae_checkpoint, require=["encoder"])
        encoder = encoder_from_checkpoint(ckpt)
        runner = HypDiffPipeline(self._with_checkpoint_features(ckpt))
        ckpt = runner._fit_diffusion(graphs, encoder)
        save_checkpoint(out, ckpt)
        return ckpt

    def generate(
        self,
        checkpoint: str | Path,
        n_graphs: int,
        out: str | Path,
        scaffold_path: Optional[str | Path] = None,
    ) -> GraphSet:
        ckpt = load_checkpoint(
            checkpoint, require=["encoder", "denoiser", "node_counts"] + DIFFUSION_KEYS
        )
        scaffold = GraphSet.from_jsonl(scaffold_path) if scaffold_path else None
        graphs = self._sample(ckpt, n_graphs, scaffold)
        graphs.to_jsonl(out)
        return graphs

    def evaluate(
        self,
        reference_path: str | Path,
        generated_path: str | Path,
        out: Optional[str | Path] = None,
    ) -> MMDReport:
        report = evaluate(
            GraphSet.from_jsonl(reference_path), GraphSet.from_jsonl(generated_path), self.config
        )
        text = json.dumps(report.model_dump(), indent=2, sort_keys=True)
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text + "\n", encoding="utf-8")
            logger.info(f"Wrote report to {out}")
        else:
            print(text)
        return report

    def snr(
        self,
        graphs_path: str | Path,
        checkpoint: str | Path,
        out: str | Path,
        plot: Optional[str | Path] = None,
    ) -> pd.DataFrame:
        """SNR of angular and white noise on the latents of ``graphs_path``.

        Uses the stored clusters and schedule when the checkpoint has them, otherwise
        fits new clusters and builds the schedule from the settings.
        """
        graphs = GraphSet.from_jsonl(graphs_path)
        ckpt = load_checkpoint(checkpoint, require=["encoder"])
        encoder = encoder_from_checkpoint(ckpt)
        config = self._with_checkpoint_features(ckpt)
        _, h = embed_graphs(encoder, graphs, config.degree_feature_cap)
        if "centroids" in ckpt.metadata:
            clusters = cluster_from_metadata(ckpt.metadata)
        else:
            clusters = hkmeans_fit(
                h, config.n_clusters, config.kmeans_iters, config.seed, c=encoder.ball.c
            )
        if all(key in ckpt.metadata for key in SCHEDULE_KEYS):
            schedule = schedule_from_metadata(ckpt.metadata)
        else:
            curved = config.model_copy(update={"curvature": encoder.ball.c})
            schedule = schedule_from_settings(curved)
        assignments = clusters.assign(h)
        x0 = tangent_coordinates(h, clusters, assignments)
        generator = torch.Generator().manual_seed(config.seed)
        table = snr_table(
            x0,
            schedule,
            clusters.signs_for(assignments),
            config.snr_trials,
            generator,
        )
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(out, index=False)
        logger.info(f"Wrote SNR curves for {len(table)} steps to {out}")
        if plot:
            self._plot_snr(table, plot)
        return table

    def ablation(
        self, graphs_path: str | Path, seeds: Sequence[int], n_graphs: int, out: str | Path
    ) -> pd.DataFrame:
        """Constrained versus unconstrained (``delta=0``, white noise) diffusion per seed.

        The autoencoder is shared by both variants of a seed.
        """
        graphs = GraphSet.from_jsonl(graphs_path)
        constrained = self.config
        unconstrained = self.config.model_copy(update={"delta": 0.0, "noise_mode": "white"})
        rows: List[Dict] = []
        for seed in seeds:
            encoder = train_autoencoder(graphs, constrained, seed=seed).model
            for variant, config in (("constrained", constrained), ("unconstrained", unconstrained)):
                logger.info(f"🔬 Ablation seed {seed}: {variant}")
                runner = HypDiffPipeline(config.model_copy(update={"seed": seed}))
                ckpt = runner._fit_diffusion(graphs, encoder)
                generated = runner._sample(ckpt, n_graphs)
                report = evaluate(graphs, generated, config)
                rows.append({"seed": seed, "variant": variant, **report.model_dump()})

        table = pd.DataFrame(rows)
        summary = {
            "runs": rows,
            "mean_degree": table.groupby("variant")["degree"].mean().to_dict(),
        }
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Wrote ablation summary to {out}")
        return table

    def _with_checkpoint_features(self, ckpt: Checkpoint) -> Settings:
        cap = ckpt.metadata.get("degree_feature_cap", self.config.degree_feature_cap)
        return self.config.model_copy(update={"degree_feature_cap": int(cap)})

    def _encoder_metadata(self, encoder: HyperbolicAutoencoder, graphs: GraphSet) -> Dict:
        return {
            "curvature": encoder.ball.c,
            "degree_feature_cap": self.config.degree_feature_cap,
            "encoder": dict(encoder.hparams),
            "node_counts": {str(n): c for n, c in graphs.node_count_histogram().items()},
        }

    def _fit_diffusion(self, graphs: GraphSet, encoder: HyperbolicAutoencoder) -> Checkpoint:
        config = self.config
        _, h = embed_graphs(encoder, graphs, config.degree_feature_cap)
        clusters = hkmeans_fit(
            h, config.n_clusters, config.kmeans_iters, config.seed, c=encoder.ball.c
        )
        logger.info(f"Clustered {h.shape[0]} embeddings into {clusters.k} groups")
        schedule = schedule_from_settings(config.model_copy(update={"curvature": encoder.ball.c}))
        denoiser = train_denoiser(graphs, encoder, clusters, schedule, config).model
        if config.calibrate_radius:
            encoder = copy.deepcopy(encoder)
            self._calibrate_decoder(graphs, encoder, denoiser, clusters, schedule)

        metadata = self._encoder_metadata(encoder, graphs)
        metadata.update(cluster_metadata(clusters))
        metadata.update(
            {
                "delta": schedule.delta,
                "T": schedule.T,
                "T0": schedule.T0,
                "beta_start": config.beta_start,
                "beta_end": config.beta_end,
                "noise_mode": config.noise_mode,
                "denoiser": dict(denoiser.hparams),
            }
        )
        ckpt = Checkpoint(metadata=metadata)
        ckpt.add_section("encoder", encoder.state_dict())
        ckpt.add_section("denoiser", denoiser.state_dict())
        return ckpt

    def _calibrate_decoder(
        self,
        graphs: GraphSet,
        encoder: HyperbolicAutoencoder,
        denoiser: DenoiserNetwork,
        clusters: ClusterModel,
        schedule: DiffusionSchedule,
    ) -> float:
        """Fit the decoder radius so sampled latents decode to the training edge count.

        One graph is sampled per training graph, with the same node count.
        """
        config = self.config
        sizes = [g.n for g in graphs]
        rngs = [graph_generator(config.seed, idx) for idx in range(len(sizes))]
        scaffold = graphs if config.conditioning == "scaffold" else None
        blocks = sample_latents(denoiser, clusters, schedule, sizes, rngs, config, scaffold)
        target = sum(g.num_edges for g in graphs)
        before = float(encoder.fd_r)
        radius = calibrate_decoder_radius(encoder, blocks, target, config.edge_threshold)
        logger.info(
            f"🎯 Decoder radius {before:.4f} -> {radius:.4f} "
            f"({target} edges over {len(sizes)} sampled graphs)"
        )
        return radius

    def _sample(
        self, ckpt: Checkpoint, n_graphs: int, scaffold: Optional[GraphSet] = None
    ) -> GraphSet:
        meta = ckpt.metadata
        config = self.config.model_copy(update={"noise_mode": meta["noise_mode"]})
        return generate(
            denoiser_from_checkpoint(ckpt),
            encoder_from_checkpoint(ckpt),
            cluster_from_metadata(meta),
            schedule_from_metadata(meta),
            n_graphs,
            node_counts=EmpiricalNodeCounts({int(n): c for n, c in meta["node_counts"].items()}),
            seed=config.seed,
            config=config,
            scaffold=scaffold,
        )

    @staticmethod
    def _plot_snr(table: pd.DataFrame, path: str | Path) -> None:
        fig = go.Figure(
            data=[
                go.Scatter(x=table["t"], y=table["snr_angular"], name="angular noise"),
                go.Scatter(x=table["t"], y=table["snr_white"], name="white noise"),
            ]
        )
        fig.update_layout(
            title="Signal-to-noise ratio of the forward process",
            xaxis_title="step t",
            yaxis_title="SNR",
            yaxis_type="log",
        )
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.write_html(str(path))
        logger.info(f"📈 Wrote SNR chart to {path}")
