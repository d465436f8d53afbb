"""Tests for the noise schedule, angular noise and the forward process."""

import math

import pytest
import torch
from scipy import stats

from src.diffusion.process import (
    angular_noise,
    diffusion_loss,
    draw_noise,
    forward_diffuse,
    make_schedule,
    radial_coeff,
    schedule_from_settings,
    snr_curve,
    snr_table,
)
from src.geometry.hkmeans import tangent_coordinates
from src.geometry.manifold import DTYPE


def _signs(n, d, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.where(torch.rand(n, d, generator=gen) < 0.5, -1.0, 1.0).to(DTYPE)


def test_single_step_schedule():
    s = make_schedule(T=1, beta_start=0.01, beta_end=0.01)
    assert s.betas.tolist() == [0.01]
    assert float(s.alpha_bar(1)) == pytest.approx(0.99)
    assert float(s.alpha_bar(0)) == 1.0


def test_default_schedule_end_point():
    s = make_schedule()
    assert float(s.alpha_bar(s.T)) == pytest.approx(4.03e-5, rel=0.01)
    assert bool((s.alpha_bars[1:] < s.alpha_bars[:-1]).all())


def test_schedule_validation():
    with pytest.raises(ValueError):
        make_schedule(T=0)
    with pytest.raises(ValueError):
        make_schedule(beta_start=0.02, beta_end=0.01)
    with pytest.raises(ValueError):
        make_schedule(beta_end=1.0)
    with pytest.raises(ValueError):
        make_schedule(delta=-0.1)
    with pytest.raises(ValueError):
        make_schedule().alpha_bar(1001)


def test_schedule_from_settings(tiny_config):
    s = schedule_from_settings(tiny_config)
    assert s.T == tiny_config.timesteps
    assert s.delta == tiny_config.delta


def test_radial_coefficient():
    s = make_schedule(delta=0.5, T0=1000.0, c=1.0)
    assert radial_coeff(s, 0) == 0.0
    assert radial_coeff(s, 500) == pytest.approx(0.5 * math.tanh(1.0), abs=1e-12)
    assert radial_coeff(make_schedule(delta=0.0), 700) == 0.0
    c4 = make_schedule(delta=0.5, T0=1000.0, c=4.0)
    assert radial_coeff(c4, 250) == pytest.approx(0.5 * math.tanh(1.0), abs=1e-12)


def test_angular_noise_follows_signs():
    signs = _signs(50, 4)
    z = angular_noise(signs, torch.Generator().manual_seed(1))
    assert bool((z * signs >= 0).all())


def test_angular_noise_magnitudes_are_half_normal():
    signs = torch.ones(5000, 2, dtype=DTYPE)
    z = angular_noise(signs, torch.Generator().manual_seed(2))
    assert stats.kstest(z.reshape(-1).numpy(), "halfnorm").pvalue > 0.001
    with pytest.raises(ValueError):
        draw_noise(signs, None, "pink")


def test_step_zero_returns_clean_data():
    x0 = torch.randn(6, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(0))
    out = forward_diffuse(x0, 0, make_schedule(), _signs(6, 3), torch.Generator().manual_seed(1))
    assert torch.equal(out, x0)


def test_forward_process_is_linear_in_data_and_noise():
    s = make_schedule()
    gen = torch.Generator().manual_seed(3)
    x, y, zx, zy = (torch.randn(5, 3, dtype=DTYPE, generator=gen) for _ in range(4))
    signs = _signs(5, 3)
    lhs = forward_diffuse(x + y, 400, s, signs, noise=zx + zy)
    rhs = forward_diffuse(x, 400, s, signs, noise=zx) + forward_diffuse(y, 400, s, signs, noise=zy)
    assert torch.allclose(lhs, rhs, atol=1e-12, rtol=0)


def test_late_step_mean_with_angular_noise():
    s = make_schedule()
    n = 200_000
    signs = _signs(1, 3).expand(n, 3).clone()
    x0 = signs * torch.tensor([0.2, 0.5, 1.0], dtype=DTYPE)
    out = forward_diffuse(x0, s.T, s, signs, torch.Generator().manual_seed(4))
    expected = s.signal_coef(s.T) * x0[0] + s.noise_coef(s.T) * signs[0] * math.sqrt(2 / math.pi)
    assert torch.allclose(out.mean(dim=0), expected, rtol=0.01, atol=0)


def test_white_noise_without_radial_term_matches_ddpm_moments():
    s = make_schedule(delta=0.0)
    n = 200_000
    x0 = torch.full((n, 2), 0.7, dtype=DTYPE)
    out = forward_diffuse(
        x0, 300, s, torch.ones(n, 2, dtype=DTYPE), torch.Generator().manual_seed(5),
        noise_mode="white",
    )
    abar = float(s.alpha_bar(300))
    assert float(out.mean()) == pytest.approx(math.sqrt(abar) * 0.7, abs=8e-3)
    assert float(out.var()) == pytest.approx(1 - abar, rel=0.01)


def test_per_row_steps_match_scalar_calls():
    s = make_schedule()
    gen = torch.Generator().manual_seed(6)
    x0 = torch.randn(4, 2, dtype=DTYPE, generator=gen)
    noise = torch.randn(4, 2, dtype=DTYPE, generator=gen)
    signs = _signs(4, 2)
    steps = torch.tensor([0, 10, 500, 1000])
    batched = forward_diffuse(x0, steps, s, signs, noise=noise)
    for row, t in enumerate(steps.tolist()):
        rows = slice(row, row + 1)
        single = forward_diffuse(x0[rows], t, s, signs[rows], noise=noise[rows])
        assert torch.allclose(batched[row], single[0], atol=1e-15, rtol=0)


def test_forward_diffuse_validation():
    s = make_schedule(T=10)
    x0 = torch.zeros(3, 2, dtype=DTYPE)
    signs = torch.ones(3, 2, dtype=DTYPE)
    with pytest.raises(ValueError):
        forward_diffuse(x0, 11, s, signs)
    with pytest.raises(ValueError):
        forward_diffuse(x0, -1, s, signs)
    with pytest.raises(ValueError):
        forward_diffuse(x0, 1, s, torch.ones(3, 3, dtype=DTYPE))
    with pytest.raises(ValueError):
        forward_diffuse(x0, torch.tensor([1, 2]), s, signs)
    with pytest.raises(ValueError):
        forward_diffuse(x0, 1, s, signs, noise=torch.zeros(2, 2, dtype=DTYPE))


def test_diffusion_loss():
    ones = torch.ones(2, 3, dtype=DTYPE)
    assert float(diffusion_loss(torch.zeros(2, 3, dtype=DTYPE), ones)) == 1.0
    assert float(diffusion_loss(ones, ones)) == 0.0
    with pytest.raises(ValueError):
        diffusion_loss(ones, torch.ones(3, 2, dtype=DTYPE))


def test_snr_curve_shape_and_first_step():
    s = make_schedule(T=50)
    x0 = torch.randn(4, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(7))
    rng = torch.Generator().manual_seed(0)
    curve = snr_curve(x0, s, _signs(4, 3), "angular", trials=8, rng=rng)
    assert len(curve) == 51
    assert curve[0] == math.inf
    assert all(math.isfinite(v) for v in curve[1:])


def test_white_snr_matches_closed_form():
    s = make_schedule()
    x0 = torch.randn(4, 3, dtype=DTYPE, generator=torch.Generator().manual_seed(8))
    rng = torch.Generator().manual_seed(1)
    curve = snr_curve(x0, s, _signs(4, 3), "white", trials=512, rng=rng)
    x0_power = float(x0.pow(2).sum())
    for t in (10, 200, 800):
        expected = float(s.signal_coef(t)) ** 2 * x0_power / ((1 - float(s.alpha_bar(t))) * 12)
        assert curve[t] == pytest.approx(expected, rel=0.1)


def test_angular_snr_dominates_white_and_decays():
    s = make_schedule()
    signs = _signs(20, 4)
    x0 = signs * torch.rand(20, 4, dtype=DTYPE, generator=torch.Generator().manual_seed(9))
    table = snr_table(x0, s, signs, trials=128, rng=torch.Generator().manual_seed(2))
    assert list(table.columns) == ["t", "snr_angular", "snr_white"]
    assert len(table) == s.T + 1
    body = table.iloc[1:]
    assert bool((body["snr_angular"] >= body["snr_white"]).all())
    window = table["snr_angular"].iloc[50:901].to_numpy()
    assert bool((window[1:] <= window[:-1]).all())


def test_snr_on_community_embeddings(trained):
    s = make_schedule(T=1000, c=trained.clusters.c)
    assignments = trained.clusters.assign(trained.embeddings)
    x0 = tangent_coordinates(trained.embeddings, trained.clusters, assignments)
    signs = trained.clusters.signs_for(assignments)
    table = snr_table(x0, s, signs, trials=64, rng=torch.Generator().manual_seed(3))
    window = table.iloc[50:901]
    assert bool((window["snr_angular"] >= window["snr_white"]).all())
    for column in ("snr_angular", "snr_white"):
        values = window[column].to_numpy()
        assert bool((values[1:] <= values[:-1]).all()), column
