"""Tests for the wrapped normal and folded normal distributions."""

import math

import numpy as np
import pytest
import torch
from scipy import integrate, stats

from src.errors import ManifoldError
from src.geometry.distributions import (
    FoldedNormal,
    FoldedNormalParams,
    WrappedNormal,
    WrappedNormalParams,
    folded_normal,
    sample_wrapped_normal,
    wrapped_normal_logdensity,
)
from src.geometry.manifold import DTYPE, ManifoldConfig, PoincarePoint, poincare_ball


def _geodesic_polar_integral(dist: WrappedNormal, family: str) -> float:
    """Integrate the density over the unit ball in geodesic polar coordinates around 0."""
    nodes, weights = np.polynomial.legendre.leggauss(200)
    rho_max = 8.0
    rho = torch.as_tensor((nodes + 1) * rho_max / 2, dtype=DTYPE)
    w_rho = torch.as_tensor(weights * rho_max / 2, dtype=DTYPE)
    theta = torch.arange(256, dtype=DTYPE) * (2 * math.pi / 256)

    r = torch.tanh(rho / 2)[:, None]
    z = torch.stack([r * torch.cos(theta), r * torch.sin(theta)], dim=-1)
    density = dist.log_prob(z.reshape(-1, 2), family=family).exp().reshape(len(rho), len(theta))
    area = torch.sinh(rho)[:, None] * (2 * math.pi / 256)
    return float((density * area * w_rho[:, None]).sum())


def test_tiny_sigma_sample_sits_on_mu():
    config = ManifoldConfig(c=1.0, dim=3)
    mu = PoincarePoint([0.2, -0.1, 0.3], config)
    z = sample_wrapped_normal(WrappedNormalParams(mu, 1e-12), torch.Generator().manual_seed(0))
    assert torch.allclose(z.coords, mu.coords, atol=1e-10, rtol=0)


def test_distance_from_origin_is_rayleigh():
    sigma = 0.1
    dist = WrappedNormal(torch.zeros(2, dtype=DTYPE), sigma)
    samples = dist.rsample((100_000,), generator=torch.Generator().manual_seed(1))
    d = poincare_ball(1.0).distance(torch.zeros(2, dtype=DTYPE), samples)
    assert float(d.mean()) == pytest.approx(sigma * math.sqrt(math.pi / 2), rel=0.02)


def test_directions_are_uniform_around_origin():
    dist = WrappedNormal(torch.zeros(2, dtype=DTYPE), 0.3)
    samples = dist.rsample((20_000,), generator=torch.Generator().manual_seed(2))
    angles = torch.atan2(samples[:, 1], samples[:, 0]).numpy()
    counts, _ = np.histogram(angles, bins=8, range=(-math.pi, math.pi))
    assert stats.chisquare(counts).pvalue > 0.001


def test_log_density_at_mu():
    config = ManifoldConfig(c=1.0, dim=3)
    mu = PoincarePoint([0.1, 0.0, -0.2], config)
    sigma = 0.4
    expected = -3 * math.log(sigma) - 1.5 * math.log(2 * math.pi)
    got = wrapped_normal_logdensity(WrappedNormalParams(mu, sigma), mu)
    assert got == pytest.approx(expected, abs=1e-12)


def test_flat_limit_matches_euclidean_normal():
    c = 1e-12
    mu = torch.tensor([0.3, -0.2], dtype=DTYPE)
    z = torch.tensor([0.5, 0.1], dtype=DTYPE)
    sigma = 0.7
    got = float(WrappedNormal(mu, sigma, c=c).log_prob(z))
    expected = float(torch.distributions.Normal(0.0, sigma).log_prob(2 * (z - mu)).sum())
    assert got == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("family", ["wrapped", "riemannian"])
def test_density_integrates_to_one(family):
    dist = WrappedNormal(torch.tensor([0.3, 0.0], dtype=DTYPE), 0.5)
    assert _geodesic_polar_integral(dist, family) == pytest.approx(1.0, abs=1e-3)


def test_riemannian_family_needs_isotropic_scale():
    dist = WrappedNormal(torch.zeros(2, dtype=DTYPE), torch.tensor([0.1, 0.2], dtype=DTYPE))
    with pytest.raises(ManifoldError):
        dist.log_prob(torch.zeros(2, dtype=DTYPE), family="riemannian")
    with pytest.raises(ValueError):
        dist.log_prob(torch.zeros(2, dtype=DTYPE), family="other")


def test_params_validation():
    config = ManifoldConfig(c=1.0, dim=2)
    mu = PoincarePoint([0.0, 0.0], config)
    with pytest.raises(ManifoldError):
        WrappedNormalParams(mu, torch.tensor([0.1, -0.1]))
    with pytest.raises(ManifoldError):
        WrappedNormalParams(mu, torch.tensor([0.1, 0.1, 0.1]))
    with pytest.raises(ManifoldError):
        FoldedNormalParams(torch.zeros(2), 0.0)

    other = PoincarePoint([0.0, 0.0], ManifoldConfig(c=2.0, dim=2))
    with pytest.raises(ManifoldError):
        wrapped_normal_logdensity(WrappedNormalParams(mu, 0.5), other)


def test_shifted_folded_normal_moments_and_support():
    dist = folded_normal(FoldedNormalParams(torch.tensor(0.5), 0.2))
    x = dist.sample((1_000_000,), generator=torch.Generator().manual_seed(3))
    assert bool((x >= 0.5).all())
    expected = 0.5 + 0.2 * math.sqrt(2 / math.pi)
    sd = 0.2 * math.sqrt(1 - 2 / math.pi)
    assert abs(float(x.mean()) - expected) < 4 * sd / 1000
    assert float(dist.mean) == pytest.approx(expected, abs=1e-12)
    assert float(dist.log_prob(torch.tensor(0.49))) == -math.inf


@pytest.mark.parametrize("shifted,lower", [(True, 0.7), (False, 0.0)])
def test_folded_density_integrates_to_one(shifted, lower):
    dist = FoldedNormal(torch.tensor(0.7, dtype=DTYPE), 0.5, shifted=shifted)

    def density(x: float) -> float:
        return math.exp(float(dist.log_prob(torch.tensor(x, dtype=DTYPE))))

    total, _ = integrate.quad(density, lower, 10)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_unshifted_folded_normal_mean():
    dist = FoldedNormal(torch.tensor(0.7, dtype=DTYPE), 0.5, shifted=False)
    x = dist.sample((1_000_000,), generator=torch.Generator().manual_seed(4))
    assert bool((x >= 0).all())
    assert float(x.mean()) == pytest.approx(float(dist.mean), abs=2e-3)
    assert float(dist.log_prob(torch.tensor(-0.1))) == -math.inf
