"""Configuration management for HypDiff."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Literal, Optional

from dotenv import dotenv_values
from pydantic import Field, ValidationError, ValidationInfo, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    # Application Configuration
    log_level: str = Field(default="INFO", description="Logging level")
    seed: int = Field(default=0, description="Seed controlling every random draw")
    threads: int = Field(default=1, ge=1, description="Worker cap for parallel sections")

    # Geometry
    curvature: float = Field(default=1.0, gt=0, description="Curvature magnitude c (space has curvature -c)")

    # Autoencoder
    latent_dim: int = Field(default=16, ge=1, description="Hyperbolic embedding dimension")
    hidden_dim: int = Field(default=32, ge=1, description="Hidden width of the graph encoder")
    ae_layers: int = Field(default=2, ge=1, description="Number of graph convolution layers")
    ae_epochs: int = Field(default=1500, ge=0, description="Autoencoder training epochs")
    ae_lr: float = Field(default=1e-3, gt=0, description="Autoencoder learning rate")
    weight_decay: float = Field(default=1e-5, ge=0, description="L2 regularization strength")
    edge_dropout: float = Field(default=0.02, ge=0, lt=1, description="Edge dropping probability")
    fd_r: float = Field(default=2.0, description="Initial Fermi-Dirac radius")
    fd_tau: float = Field(default=1.0, gt=0, description="Initial Fermi-Dirac temperature")
    degree_feature_cap: int = Field(default=32, ge=1, description="Cap for one-hot degree features")
    activation: Literal["silu", "relu", "tanh"] = Field(default="silu", description="Hidden activation")
    resample_negatives: bool = Field(default=True, description="Draw fresh non-edges every epoch")

    # Clustering
    n_clusters: int = Field(default=4, ge=1, description="Number of hyperbolic k-means clusters")
    kmeans_iters: int = Field(default=50, ge=1, description="Maximum k-means iterations")

    # Diffusion
    timesteps: int = Field(default=1000, ge=1, description="Number of diffusion steps T")
    beta_start: float = Field(default=1e-4, description="First beta of the linear schedule")
    beta_end: float = Field(default=0.02, description="Last beta of the linear schedule")
    delta: float = Field(default=0.5, ge=0, description="Radial growth strength")
    t0: float = Field(default=1000.0, gt=0, description="Radial growth speed constant")
    noise_mode: Literal["angular", "white"] = Field(default="angular", description="Noise family")

    # Denoiser
    denoiser_widths: str = Field(
        default="32,64,64,32",
        description="Hidden widths of the denoising network (comma-separated)",
    )
    time_dim: int = Field(default=32, ge=2, description="Sinusoidal time embedding size")
    diff_epochs: int = Field(default=2000, ge=0, description="Denoiser training epochs")
    diff_lr: float = Field(default=1e-3, gt=0, description="Denoiser learning rate")

    # Sampling
    conditioning: Literal["unconditional", "scaffold"] = Field(
        default="unconditional", description="Adjacency used by the denoiser while sampling"
    )
    knn: int = Field(default=4, ge=1, description="Neighbours in the sampling adjacency")
    knn_refresh: int = Field(default=50, ge=1, description="Steps between sampling adjacency rebuilds")
    edge_threshold: float = Field(default=0.5, gt=0, lt=1, description="Decoder edge threshold")
    calibrate_radius: bool = Field(default=True, description="Fit the decoder radius to sampled latents after train-diff")

    # Evaluation
    clustering_bins: int = Field(default=100, ge=1, description="Clustering coefficient bins")
    spectrum_bins: int = Field(default=200, ge=1, description="Laplacian spectrum bins")
    prdc_k: int = Field(default=5, ge=1, description="Neighbours for precision/recall/density/coverage")
    snr_trials: int = Field(default=64, ge=1, description="Noise draws per SNR estimate")

    # Logging cadence
    log_every: int = Field(default=50, ge=1, description="Epochs between training log lines")

    @field_validator("denoiser_widths")
    @classmethod
    def check_denoiser_widths(cls, v: str) -> str:
        """Validate comma-separated positive widths."""
        parts = [s.strip() for s in v.split(",") if s.strip()]
        if not parts or not all(p.isdigit() and int(p) > 0 for p in parts):
            raise ValueError(f"denoiser_widths must be positive integers, got {v!r}")
        return ",".join(parts)

    @field_validator("beta_end")
    @classmethod
    def check_beta_range(cls, v: float, info: ValidationInfo) -> float:
        """Require 0 < beta_start <= beta_end < 1."""
        start = info.data.get("beta_start", 1e-4)
        if not (0 < start <= v < 1):
            raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {start} and {v}")
        return v

    @property
    def widths(self) -> List[int]:
        """Denoiser widths as integers."""
        return [int(s) for s in self.denoiser_widths.split(",")]

    model_config = SettingsConfigDict(
        env_prefix="HYPDIFF_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
    )


def load_settings(
    config_path: Optional[str | Path] = None, overrides: Optional[Dict[str, object]] = None
) -> Settings:
    """Build settings from a flat key=value file and flag overrides.

    Flags win over the file, the file wins over the environment.
    """
    values: Dict[str, object] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        for key, value in dotenv_values(path).items():
            if value is not None:
                values[key.strip().lower()] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key.lower()] = value

    unknown = sorted(set(values) - set(Settings.model_fields))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


# Global settings instance
settings = Settings()
