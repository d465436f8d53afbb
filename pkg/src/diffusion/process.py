"""Forward geometric diffusion in cluster-tangent coordinates.

``x_t = (sqrt(abar_t) + radial(t)) * x_0 + sqrt(1 - abar_t) * z`` where ``z`` is
angular noise (cluster signs times |N(0, 1)|) or plain Gaussian noise and
``radial(t) = delta * tanh(sqrt(c) * 2 * t / T0)``. Step 0 is the clean data:
``abar_0 = 1`` and ``radial(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Union

import pandas as pd
import torch
import torch.nn.functional as F

from ..config import Settings
from ..geometry.manifold import DTYPE

NoiseMode = Literal["angular", "white"]
Steps = Union[int, torch.Tensor]

# lambda at the origin of the ball
ORIGIN_CONFORMAL = 2.0


@dataclass(frozen=True)
class DiffusionSchedule:
    T: int
    betas: torch.Tensor
    alpha_bars: torch.Tensor
    delta: float
    T0: float
    c: float

    def _steps(self, t: Steps) -> torch.Tensor:
        t = torch.as_tensor(t, dtype=torch.long)
        if bool(((t < 0) | (t > self.T)).any()):
            raise ValueError(f"Diffusion steps must lie in [0, {self.T}]")
        return t

    def alpha_bar(self, t: Steps) -> torch.Tensor:
        table = torch.cat([torch.ones(1, dtype=DTYPE), self.alpha_bars])
        return table[self._steps(t)]

    def radial(self, t: Steps) -> torch.Tensor:
        t = self._steps(t).to(DTYPE)
        return self.delta * torch.tanh(math.sqrt(self.c) * ORIGIN_CONFORMAL * t / self.T0)

    def signal_coef(self, t: Steps) -> torch.Tensor:
        return self.alpha_bar(t).sqrt() + self.radial(t)

    def noise_coef(self, t: Steps) -> torch.Tensor:
        return (1 - self.alpha_bar(t)).sqrt()


def make_schedule(
    T: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    delta: float = 0.5,
    T0: float = 1000.0,
    c: float = 1.0,
) -> DiffusionSchedule:
    """Linear beta schedule with cumulative-product alpha bars."""
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"Need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if delta < 0 or T0 <= 0 or c <= 0:
        raise ValueError(f"Need delta >= 0, T0 > 0 and c > 0, got {delta}, {T0}, {c}")
    betas = torch.linspace(beta_start, beta_end, T, dtype=DTYPE)
    return DiffusionSchedule(
        T=T,
        betas=betas,
        alpha_bars=torch.cumprod(1 - betas, dim=0),
        delta=float(delta),
        T0=float(T0),
        c=float(c),
    )


def schedule_from_settings(config: Settings) -> DiffusionSchedule:
    return make_schedule(
        T=config.timesteps,
        beta_start=config.beta_start,
        beta_end=config.beta_end,
        delta=config.delta,
        T0=config.t0,
        c=config.curvature,
    )


def radial_coeff(s: DiffusionSchedule, t: Steps) -> float:
    return float(s.radial(t))


def angular_noise(signs: torch.Tensor, rng: Optional[torch.Generator] = None) -> torch.Tensor:
    """``signs * |eps|`` with ``eps ~ N(0, I)``."""
    eps = torch.randn(signs.shape, dtype=DTYPE, generator=rng)
    return signs.to(DTYPE) * eps.abs()


def draw_noise(
    signs: torch.Tensor, rng: Optional[torch.Generator], noise_mode: NoiseMode = "angular"
) -> torch.Tensor:
    if noise_mode == "angular":
        return angular_noise(signs, rng)
    if noise_mode == "white":
        return torch.randn(signs.shape, dtype=DTYPE, generator=rng)
    raise ValueError(f"Unknown noise mode: {noise_mode}")


def _node_column(t: Steps, values: torch.Tensor) -> torch.Tensor:
    """Broadcast a per-step coefficient against an ``n x d`` matrix."""
    return values.unsqueeze(-1) if torch.as_tensor(t).dim() > 0 else values


def forward_diffuse(
    x0: torch.Tensor,
    t: Steps,
    s: DiffusionSchedule,
    signs: torch.Tensor,
    rng: Optional[torch.Generator] = None,
    noise: Optional[torch.Tensor] = None,
    noise_mode: NoiseMode = "angular",
) -> torch.Tensor:
    """Corrupt ``x0`` to step ``t``; ``t`` is a scalar or one step per row."""
    if signs.shape != x0.shape:
        raise ValueError(f"signs shape {tuple(signs.shape)} does not match x0 {tuple(x0.shape)}")
    t_tensor = torch.as_tensor(t)
    if t_tensor.dim() > 0 and t_tensor.shape[0] != x0.shape[0]:
        raise ValueError(f"Expected {x0.shape[0]} per-row steps, got {t_tensor.shape[0]}")
    if noise is None:
        noise = draw_noise(signs, rng, noise_mode)
    elif noise.shape != x0.shape:
        raise ValueError(f"noise shape {tuple(noise.shape)} does not match x0 {tuple(x0.shape)}")
    signal = _node_column(t, s.signal_coef(t))
    scale = _node_column(t, s.noise_coef(t))
    return signal * x0 + scale * noise


def diffusion_loss(predicted_x0: torch.Tensor, true_x0: torch.Tensor) -> torch.Tensor:
    if predicted_x0.shape != true_x0.shape:
        raise ValueError(
            f"Shape mismatch: {tuple(predicted_x0.shape)} vs {tuple(true_x0.shape)}"
        )
    return F.mse_loss(predicted_x0, true_x0)


def snr_curve(
    x0: torch.Tensor,
    s: DiffusionSchedule,
    signs: torch.Tensor,
    mode: NoiseMode = "angular",
    trials: int = 64,
    rng: Optional[torch.Generator] = None,
) -> List[float]:
    """Signal-to-noise ratio for every step ``0..T`` (``inf`` at step 0).

    Noise power is the centred power of the stochastic part (angular noise has mean
    ``signs * sqrt(2/pi)``), estimated from ``trials`` draws shared by all steps.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    draws = torch.stack([draw_noise(signs, rng, mode) for _ in range(trials)])
    if mode == "angular":
        draws = draws - signs.to(DTYPE) * math.sqrt(2 / math.pi)
    power = float(draws.pow(2).sum(dim=(1, 2)).mean())
    x0_power = float(x0.pow(2).sum())

    steps = torch.arange(0, s.T + 1)
    signal = s.signal_coef(steps).pow(2) * x0_power
    noise = (1 - s.alpha_bar(steps)) * power
    snr = torch.where(
        noise > 0, signal / noise.clamp_min(1e-300), torch.full_like(signal, math.inf)
    )
    return snr.tolist()


def snr_table(
    x0: torch.Tensor,
    s: DiffusionSchedule,
    signs: torch.Tensor,
    trials: int = 64,
    rng: Optional[torch.Generator] = None,
) -> pd.DataFrame:
    """Angular and white SNR side by side, one row per step."""
    return pd.DataFrame(
        {
            "t": list(range(s.T + 1)),
            "snr_angular": snr_curve(x0, s, signs, "angular", trials, rng),
            "snr_white": snr_curve(x0, s, signs, "white", trials, rng),
        }
    )
