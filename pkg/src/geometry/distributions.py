"""Wrapped normal and folded normal distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import torch
from torch.distributions import Distribution, Normal, constraints

from ..errors import ManifoldError
from .manifold import DTYPE, PoincarePoint, TensorLike, as_tensor, poincare_ball

Family = Literal["wrapped", "riemannian"]


def _log_x_over_sinh(x: torch.Tensor) -> torch.Tensor:
    """log(x / sinh(x)) for x >= 0, with the x -> 0 limit 0."""
    safe = x.clamp_min(1e-6)
    log_sinh = safe + torch.log1p(-torch.exp(-2 * safe)) - math.log(2)
    return torch.where(x > 1e-6, torch.log(safe) - log_sinh, -x * x / 6)


def _log_cosh(x: torch.Tensor) -> torch.Tensor:
    a = x.abs()
    return a + torch.log1p(torch.exp(-2 * a)) - math.log(2)


def riemannian_normal_log_normalizer(sigma: float, c: float, dim: int) -> float:
    """log Z of the isotropic Riemannian normal on the Poincaré ball.

    Closed form of the radial integral of exp(-r^2 / 2 sigma^2) against the volume
    element (sinh(sqrt(c) r) / sqrt(c))^(dim - 1), times the sphere area.
    """
    sqrt_c = math.sqrt(c)
    total = 0.0
    for k in range(dim):
        a = dim - 1 - 2 * k
        term = math.exp(a * a * c * sigma * sigma / 2) * math.erfc(
            -a * sqrt_c * sigma / math.sqrt(2)
        )
        total += (-1) ** k * math.comb(dim - 1, k) * term
    if not total > 0:
        raise ManifoldError(f"Normalizer underflow for sigma={sigma}, dim={dim}")
    log_radial = (
        math.log(total)
        + math.log(sigma)
        + 0.5 * math.log(math.pi / 2)
        - (dim - 1) * math.log(2 * sqrt_c)
    )
    log_sphere = math.log(2) + dim / 2 * math.log(math.pi) - math.lgamma(dim / 2)
    return log_radial + log_sphere


class WrappedNormal(Distribution):
    """Gaussian in the tangent space at ``loc`` pushed onto the ball by the exp-map.

    ``scale`` is the diagonal standard deviation of the tangent Gaussian.
    """

    arg_constraints = {"loc": constraints.real_vector, "scale": constraints.positive}
    support = constraints.real_vector
    has_rsample = True

    def __init__(self, loc: TensorLike, scale: TensorLike, c: float = 1.0, validate_args=None):
        self.loc = as_tensor(loc)
        self.scale = as_tensor(scale).expand_as(self.loc).clone()
        self.ball = poincare_ball(float(c))
        super().__init__(
            batch_shape=self.loc.shape[:-1],
            event_shape=self.loc.shape[-1:],
            validate_args=validate_args,
        )

    @property
    def mean(self) -> torch.Tensor:
        return self.loc

    def rsample(
        self, sample_shape: torch.Size = torch.Size(), generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        shape = self._extended_shape(sample_shape)
        v = torch.randn(shape, dtype=DTYPE, generator=generator) * self.scale
        loc = self.loc.expand(shape)
        return self.ball.project(self.ball.expmap(loc, v / self.ball.lambda_x(loc)))

    def log_prob(self, value: torch.Tensor, family: Family = "wrapped") -> torch.Tensor:
        value = as_tensor(value)
        dim = self.loc.shape[-1]
        v = self.ball.lambda_x(self.loc) * self.ball.logmap(self.loc, value)
        radius = v.norm(dim=-1)
        if family == "wrapped":
            gauss = Normal(torch.zeros_like(self.scale), self.scale).log_prob(v).sum(dim=-1)
            return gauss + (dim - 1) * _log_x_over_sinh(self.ball.sqrt_c * radius)
        if family == "riemannian":
            sigma = self.scale.reshape(-1)
            if not bool(torch.all(sigma == sigma[0])):
                raise ManifoldError("The Riemannian normal needs an isotropic scale")
            s = float(sigma[0])
            log_z = riemannian_normal_log_normalizer(s, self.ball.c, dim)
            return -radius * radius / (2 * s * s) - log_z
        raise ValueError(f"Unknown family: {family}")


class FoldedNormal(Distribution):
    """Folded Gaussian.

    With ``shifted=True`` this is ``loc + scale * |eps|`` (support ``x >= loc``),
    otherwise the law of ``|Y|`` for ``Y ~ N(loc, scale^2)`` (support ``x >= 0``).
    """

    arg_constraints = {"loc": constraints.real, "scale": constraints.positive}
    support = constraints.real

    def __init__(
        self, loc: TensorLike, scale: TensorLike, shifted: bool = True, validate_args=None
    ):
        self.loc = as_tensor(loc)
        self.scale = as_tensor(scale).expand_as(self.loc).clone()
        self.shifted = shifted
        super().__init__(batch_shape=self.loc.shape, validate_args=validate_args)

    @property
    def mean(self) -> torch.Tensor:
        half = self.scale * math.sqrt(2 / math.pi)
        if self.shifted:
            return self.loc + half
        ratio = self.loc / self.scale
        phi = Normal(0.0, 1.0).cdf(-ratio)
        return half * torch.exp(-ratio * ratio / 2) + self.loc * (1 - 2 * phi)

    def sample(
        self, sample_shape: torch.Size = torch.Size(), generator: Optional[torch.Generator] = None
    ) -> torch.Tensor:
        shape = self._extended_shape(sample_shape)
        eps = torch.randn(shape, dtype=DTYPE, generator=generator)
        if self.shifted:
            return self.loc + self.scale * eps.abs()
        return (self.loc + self.scale * eps).abs()

    def log_prob(self, value: torch.Tensor) -> torch.Tensor:
        x = as_tensor(value)
        log_norm = 0.5 * torch.log(2 / (math.pi * self.scale**2))
        var2 = 2 * self.scale**2
        if self.shifted:
            inside = log_norm - (x - self.loc) ** 2 / var2
            return torch.where(x >= self.loc, inside, torch.full_like(inside, -math.inf))
        inside = log_norm - (x**2 + self.loc**2) / var2 + _log_cosh(self.loc * x / self.scale**2)
        return torch.where(x >= 0, inside, torch.full_like(inside, -math.inf))


@dataclass(frozen=True)
class WrappedNormalParams:
    mu: PoincarePoint
    sigma: torch.Tensor

    def __post_init__(self):
        sigma = as_tensor(self.sigma).detach().clone()
        if sigma.dim() == 0:
            sigma = sigma.expand(self.mu.config.dim).clone()
        object.__setattr__(self, "sigma", sigma)
        if sigma.shape != self.mu.coords.shape:
            raise ManifoldError(f"sigma shape {tuple(sigma.shape)} does not match mu")
        if not bool((sigma > 0).all()):
            raise ManifoldError("sigma entries must be positive")

    def distribution(self) -> WrappedNormal:
        return WrappedNormal(self.mu.coords, self.sigma, c=self.mu.config.c)


@dataclass(frozen=True)
class FoldedNormalParams:
    mu: torch.Tensor
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", as_tensor(self.mu).detach().clone())
        if not self.sigma > 0:
            raise ManifoldError(f"sigma must be positive, got {self.sigma}")


def sample_wrapped_normal(params: WrappedNormalParams, rng: torch.Generator) -> PoincarePoint:
    coords = params.distribution().rsample(generator=rng)
    return PoincarePoint(coords, params.mu.config)


def wrapped_normal_logdensity(
    params: WrappedNormalParams, z: PoincarePoint, family: Family = "wrapped"
) -> float:
    """Log density with respect to the Riemannian volume of the ball."""
    if z.config != params.mu.config:
        raise ManifoldError(f"Config mismatch: {params.mu.config} vs {z.config}")
    return float(params.distribution().log_prob(z.coords, family=family))


def folded_normal(params: FoldedNormalParams) -> FoldedNormal:
    """Shifted folded normal ``N_f(mu, sigma)``; use ``.sample`` and ``.log_prob``."""
    return FoldedNormal(params.mu, params.sigma, shifted=True)
