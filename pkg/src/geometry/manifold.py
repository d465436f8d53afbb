"""Hyperbolic geometry on the Poincaré ball, the Lorentz hyperboloid and the Klein ball.

The kernel classes ``PoincareBall`` and ``Lorentz`` work batch-wise on the last
tensor axis in float64 and are what the models call. The typed functions at the
bottom validate single points (``PoincarePoint``, ``LorentzPoint``,
``TangentVector``) and delegate to the kernels.

Conventions: ``c > 0`` is the curvature magnitude (the space has curvature -c),
the hyperboloid is ``<z, z>_L = -1/c`` with ``z_0 > 0`` and the conformal factor
is ``2 / (1 - c|x|^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import torch
from pydantic import BaseModel, ConfigDict, Field

from ..errors import ManifoldError

DTYPE = torch.float64
MIN_NORM = 1e-15
BALL_EPS = 1e-12
ARTANH_EPS = 1e-15
ARCOSH_EPS = 1e-15
ON_MANIFOLD_TOL = 1e-9

TensorLike = Union[torch.Tensor, Sequence[float]]


def as_tensor(x: TensorLike) -> torch.Tensor:
    """Convert to a float64 tensor without copying when possible."""
    return torch.as_tensor(x, dtype=DTYPE)


def artanh(x: torch.Tensor) -> torch.Tensor:
    return torch.atanh(x.clamp(-1 + ARTANH_EPS, 1 - ARTANH_EPS))


def arcosh(x: torch.Tensor) -> torch.Tensor:
    return torch.acosh(x.clamp_min(1 + ARCOSH_EPS))


def _sqnorm(x: torch.Tensor) -> torch.Tensor:
    return (x * x).sum(dim=-1, keepdim=True)


class PoincareBall:
    """Poincaré ball kernels for curvature -c."""

    def __init__(self, c: float = 1.0):
        if not c > 0:
            raise ManifoldError(f"Curvature magnitude must be positive, got {c}")
        self.c = float(c)
        self.sqrt_c = math.sqrt(self.c)

    def __repr__(self) -> str:
        return f"PoincareBall(c={self.c})"

    @property
    def max_norm(self) -> float:
        return (1 - BALL_EPS) / self.sqrt_c

    def mobius_add(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        c = self.c
        xy = (x * y).sum(dim=-1, keepdim=True)
        x2 = _sqnorm(x)
        y2 = _sqnorm(y)
        num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
        den = 1 + 2 * c * xy + c**2 * x2 * y2
        return num / den.clamp_min(MIN_NORM)

    def distance(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        sub_norm = self.mobius_add(-x, y).norm(dim=-1)
        return 2 / self.sqrt_c * artanh(self.sqrt_c * sub_norm)

    def lambda_x(self, x: torch.Tensor) -> torch.Tensor:
        """Conformal factor, keeping the last axis."""
        return 2 / (1 - self.c * _sqnorm(x)).clamp_min(MIN_NORM)

    def expmap(self, x: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        v_norm = v.norm(dim=-1, keepdim=True)
        safe = v_norm.clamp_min(MIN_NORM)
        step = torch.tanh(self.sqrt_c * self.lambda_x(x) * safe / 2) * v / (self.sqrt_c * safe)
        return torch.where(v_norm == 0, x, self.mobius_add(x, step))

    def logmap(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        sub = self.mobius_add(-x, y)
        sub_norm = sub.norm(dim=-1, keepdim=True)
        safe = sub_norm.clamp_min(MIN_NORM)
        scale = 2 / (self.sqrt_c * self.lambda_x(x)) * artanh(self.sqrt_c * safe) / safe
        return torch.where(sub_norm == 0, torch.zeros_like(sub), scale * sub)

    def expmap0(self, v: torch.Tensor) -> torch.Tensor:
        v_norm = v.norm(dim=-1, keepdim=True)
        safe = v_norm.clamp_min(MIN_NORM)
        out = torch.tanh(self.sqrt_c * safe) * v / (self.sqrt_c * safe)
        return torch.where(v_norm == 0, torch.zeros_like(v), out)

    def logmap0(self, y: torch.Tensor) -> torch.Tensor:
        y_norm = y.norm(dim=-1, keepdim=True)
        safe = y_norm.clamp_min(MIN_NORM)
        out = artanh(self.sqrt_c * safe) * y / (self.sqrt_c * safe)
        return torch.where(y_norm == 0, torch.zeros_like(y), out)

    def project(self, x: torch.Tensor) -> torch.Tensor:
        """Pull points back inside the ball, leaving interior points untouched."""
        norm = x.norm(dim=-1, keepdim=True).clamp_min(MIN_NORM)
        return torch.where(norm > self.max_norm, x / norm * self.max_norm, x)

    def boundary_violations(self, x: torch.Tensor) -> int:
        """Number of rows ``project`` would move."""
        return int((x.detach().norm(dim=-1) > self.max_norm).sum())

    def to_lorentz(self, x: torch.Tensor) -> torch.Tensor:
        sq = self.c * _sqnorm(x)
        den = (1 - sq).clamp_min(MIN_NORM)
        z0 = (1 + sq) / (self.sqrt_c * den)
        return torch.cat([z0, 2 * x / den], dim=-1)

    def from_lorentz(self, z: torch.Tensor) -> torch.Tensor:
        return z[..., 1:] / (1 + self.sqrt_c * z[..., :1])


class Lorentz:
    """Hyperboloid kernels for curvature -c; ambient vectors have length dim + 1."""

    def __init__(self, c: float = 1.0):
        if not c > 0:
            raise ManifoldError(f"Curvature magnitude must be positive, got {c}")
        self.c = float(c)
        self.sqrt_c = math.sqrt(self.c)

    def __repr__(self) -> str:
        return f"Lorentz(c={self.c})"

    def inner(self, u: torch.Tensor, v: torch.Tensor, keepdim: bool = False) -> torch.Tensor:
        if u.shape[-1] < 2 or v.shape[-1] < 2:
            raise ManifoldError("Lorentz vectors need at least two coordinates")
        if u.shape[-1] != v.shape[-1]:
            raise ManifoldError(f"Length mismatch: {u.shape[-1]} vs {v.shape[-1]}")
        prod = u * v
        out = prod[..., 1:].sum(dim=-1, keepdim=True) - prod[..., :1]
        return out if keepdim else out.squeeze(-1)

    def origin(self, dim: int) -> torch.Tensor:
        o = torch.zeros(dim + 1, dtype=DTYPE)
        o[0] = 1 / self.sqrt_c
        return o

    def tangent_norm(self, u: torch.Tensor, keepdim: bool = False) -> torch.Tensor:
        return self.inner(u, u, keepdim=keepdim).clamp_min(0).sqrt()

    def project(self, z: torch.Tensor) -> torch.Tensor:
        """Recompute the time coordinate so that ``<z, z>_L = -1/c``."""
        spatial = z[..., 1:]
        z0 = (1 / self.c + _sqnorm(spatial)).sqrt()
        return torch.cat([z0, spatial], dim=-1)

    def proj_tangent(self, mu: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        return u + self.c * self.inner(mu, u, keepdim=True) * mu

    def expmap(self, mu: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        u_norm = self.tangent_norm(u, keepdim=True)
        theta = self.sqrt_c * u_norm.clamp_min(MIN_NORM)
        out = self.project(torch.cosh(theta) * mu + torch.sinh(theta) * u / theta)
        return torch.where(u_norm == 0, mu, out)

    def logmap(self, mu: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        alpha = (-self.c * self.inner(mu, z, keepdim=True)).clamp_min(1 + ARCOSH_EPS)
        coef = arcosh(alpha) / (alpha * alpha - 1).sqrt()
        out = self.proj_tangent(mu, coef * (z - alpha * mu))
        same = (z == mu).all(dim=-1, keepdim=True)
        return torch.where(same, torch.zeros_like(out), out)

    def distance(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return arcosh(-self.c * self.inner(x, y)) / self.sqrt_c

    def parallel_transport(
        self, nu: torch.Tensor, mu: torch.Tensor, v: torch.Tensor
    ) -> torch.Tensor:
        """Transport ``v`` from the tangent space at ``nu`` to the one at ``mu``."""
        alpha = -self.c * self.inner(nu, mu, keepdim=True)
        coef = self.c * self.inner(mu - alpha * nu, v, keepdim=True) / (alpha + 1)
        out = v + coef * (nu + mu)
        same = (nu == mu).all(dim=-1, keepdim=True)
        return torch.where(same, v, out)

    def to_klein(self, z: torch.Tensor) -> torch.Tensor:
        return z[..., 1:] / z[..., :1]

    def from_klein(self, k: torch.Tensor) -> torch.Tensor:
        sq = _sqnorm(k)
        if bool((sq >= 1).any()):
            raise ManifoldError("Klein vectors must satisfy |k| < 1")
        scale = 1 / (self.sqrt_c * (1 - sq).sqrt())
        return torch.cat([scale, scale * k], dim=-1)


@lru_cache(maxsize=32)
def poincare_ball(c: float) -> PoincareBall:
    return PoincareBall(c)


@lru_cache(maxsize=32)
def lorentz_model(c: float) -> Lorentz:
    return Lorentz(c)


def pole_map_tensor(x: torch.Tensor, c: float) -> torch.Tensor:
    """Pole map of origin-tangent spatial coordinates into the Klein ball.

    ``P(x) = tanh(sqrt(c)|x|) x / |x|`` with ``P(0) = 0``; composing it with the
    origin log-map of the hyperboloid gives the Klein projection.
    """
    sqrt_c = math.sqrt(c)
    x_norm = x.norm(dim=-1, keepdim=True)
    safe = x_norm.clamp_min(MIN_NORM)
    return torch.where(x_norm == 0, torch.zeros_like(x), torch.tanh(sqrt_c * safe) * x / safe)


# --------------------------------------------------------------------------
# Typed points
# --------------------------------------------------------------------------


class ManifoldConfig(BaseModel):
    """Curvature magnitude and intrinsic dimension of a hyperbolic space."""

    model_config = ConfigDict(frozen=True)

    c: float = Field(gt=0, description="Curvature magnitude")
    dim: int = Field(ge=1, description="Intrinsic dimension")


@dataclass(frozen=True)
class PoincarePoint:
    coords: torch.Tensor
    config: ManifoldConfig

    def __post_init__(self):
        coords = as_tensor(self.coords).detach().clone()
        object.__setattr__(self, "coords", coords)
        if coords.shape != (self.config.dim,):
            raise ManifoldError(
                f"Expected {self.config.dim} coordinates, got {tuple(coords.shape)}"
            )
        if not bool(torch.isfinite(coords).all()):
            raise ManifoldError("Poincaré coordinates must be finite")
        if self.config.c * float(coords @ coords) >= 1 - BALL_EPS:
            raise ManifoldError("Point lies on or outside the Poincaré ball boundary")


@dataclass(frozen=True)
class LorentzPoint:
    coords: torch.Tensor
    config: ManifoldConfig

    def __post_init__(self):
        coords = as_tensor(self.coords).detach().clone()
        object.__setattr__(self, "coords", coords)
        if coords.shape != (self.config.dim + 1,):
            raise ManifoldError(
                f"Expected {self.config.dim + 1} coordinates, got {tuple(coords.shape)}"
            )
        if not bool(torch.isfinite(coords).all()) or coords[0] <= 0:
            raise ManifoldError("Hyperboloid points need finite coordinates and z_0 > 0")
        inner = float(lorentz_model(self.config.c).inner(coords, coords))
        if abs(inner + 1 / self.config.c) > ON_MANIFOLD_TOL * max(1.0, float(coords[0]) ** 2):
            raise ManifoldError(f"Point is off the hyperboloid: <z,z>_L = {inner}")


@dataclass(frozen=True)
class TangentVector:
    base: Union[PoincarePoint, LorentzPoint]
    vec: torch.Tensor

    def __post_init__(self):
        vec = as_tensor(self.vec).detach().clone()
        object.__setattr__(self, "vec", vec)
        if vec.shape != self.base.coords.shape:
            raise ManifoldError(
                f"Tangent vector shape {tuple(vec.shape)} does not match base "
                f"{tuple(self.base.coords.shape)}"
            )
        if not bool(torch.isfinite(vec).all()):
            raise ManifoldError("Tangent vectors must be finite")
        if isinstance(self.base, LorentzPoint):
            inner = float(lorentz_model(self.base.config.c).inner(vec, self.base.coords))
            scale = max(1.0, float(vec.norm()) * float(self.base.coords.norm()))
            if abs(inner) > ON_MANIFOLD_TOL * scale:
                raise ManifoldError(f"Vector is not tangent at its base: <u,mu>_L = {inner}")


def _same_config(*points: Union[PoincarePoint, LorentzPoint]) -> ManifoldConfig:
    config = points[0].config
    for p in points[1:]:
        if p.config != config:
            raise ManifoldError(f"Config mismatch: {config} vs {p.config}")
    return config


def _ball_point(coords: torch.Tensor, config: ManifoldConfig) -> PoincarePoint:
    return PoincarePoint(poincare_ball(config.c).project(coords), config)


# --------------------------------------------------------------------------
# Typed operations
# --------------------------------------------------------------------------


def mobius_add(x: PoincarePoint, y: PoincarePoint) -> PoincarePoint:
    config = _same_config(x, y)
    return _ball_point(poincare_ball(config.c).mobius_add(x.coords, y.coords), config)


def poincare_distance(x: PoincarePoint, y: PoincarePoint) -> float:
    config = _same_config(x, y)
    return float(poincare_ball(config.c).distance(x.coords, y.coords))


def conformal_factor(x: PoincarePoint) -> float:
    return float(poincare_ball(x.config.c).lambda_x(x.coords))


def poincare_expmap(mu: PoincarePoint, v: TangentVector) -> PoincarePoint:
    _same_config(mu, v.base)
    if not torch.any(v.vec != 0):
        return mu
    return _ball_point(poincare_ball(mu.config.c).expmap(mu.coords, v.vec), mu.config)


def poincare_logmap(mu: PoincarePoint, x: PoincarePoint) -> TangentVector:
    _same_config(mu, x)
    return TangentVector(mu, poincare_ball(mu.config.c).logmap(mu.coords, x.coords))


def lorentz_inner(u: TensorLike, v: TensorLike) -> float:
    return float(lorentz_model(1.0).inner(as_tensor(u), as_tensor(v)))


def lorentz_origin(config: ManifoldConfig) -> LorentzPoint:
    return LorentzPoint(lorentz_model(config.c).origin(config.dim), config)


def lorentz_expmap(mu: LorentzPoint, u: TangentVector) -> LorentzPoint:
    _same_config(mu, u.base)
    if not torch.any(u.vec != 0):
        return mu
    return LorentzPoint(lorentz_model(mu.config.c).expmap(mu.coords, u.vec), mu.config)


def lorentz_logmap(mu: LorentzPoint, z: LorentzPoint) -> TangentVector:
    _same_config(mu, z)
    return TangentVector(mu, lorentz_model(mu.config.c).logmap(mu.coords, z.coords))


def lorentz_distance(x: LorentzPoint, y: LorentzPoint) -> float:
    config = _same_config(x, y)
    return float(lorentz_model(config.c).distance(x.coords, y.coords))


def parallel_transport(nu: LorentzPoint, mu: LorentzPoint, v: TangentVector) -> TangentVector:
    _same_config(nu, mu, v.base)
    moved = lorentz_model(mu.config.c).parallel_transport(nu.coords, mu.coords, v.vec)
    return TangentVector(mu, moved)


def klein_projection(z: LorentzPoint) -> torch.Tensor:
    return lorentz_model(z.config.c).to_klein(z.coords)


def klein_inverse(k: TensorLike, config: ManifoldConfig) -> LorentzPoint:
    return LorentzPoint(lorentz_model(config.c).from_klein(as_tensor(k)), config)


def pole_map(x: TensorLike, c: float) -> torch.Tensor:
    """Klein vector of an origin-tangent vector given by its spatial coordinates."""
    x = as_tensor(x)
    if not bool(torch.isfinite(x).all()):
        raise ManifoldError("pole_map input must be finite")
    return pole_map_tensor(x, c)


def klein_from_cluster_tangent(v: TangentVector) -> torch.Tensor:
    """Klein vector of the point a cluster-tangent vector (Poincaré base) maps to."""
    config = v.base.config
    h = poincare_ball(config.c).expmap(v.base.coords, v.vec)
    lorentz = lorentz_model(config.c)
    u = lorentz.logmap(lorentz.origin(config.dim), poincare_ball(config.c).to_lorentz(h))
    return pole_map_tensor(u[1:], config.c)


def poincare_to_lorentz(x: PoincarePoint) -> LorentzPoint:
    return LorentzPoint(poincare_ball(x.config.c).to_lorentz(x.coords), x.config)


def lorentz_to_poincare(z: LorentzPoint) -> PoincarePoint:
    return _ball_point(poincare_ball(z.config.c).from_lorentz(z.coords), z.config)
