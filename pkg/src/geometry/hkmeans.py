"""Hyperbolic k-means on the Poincaré ball and the cluster-tangent coordinates built on it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import torch

from ..errors import ManifoldError
from .manifold import DTYPE, ManifoldConfig, PoincarePoint, TangentVector, poincare_ball

logger = logging.getLogger(__name__)

REFINE_STEPS = 3

PointsLike = Union[torch.Tensor, Sequence[PoincarePoint]]


@dataclass
class ClusterModel:
    """Fitted clusters: centroids, training assignments, sign rows and proportions."""

    k: int
    c: float
    centroids: torch.Tensor
    assignments: torch.Tensor
    sign_matrix: torch.Tensor
    proportions: torch.Tensor
    objective_trace: List[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    def centroid_points(self) -> List[PoincarePoint]:
        config = ManifoldConfig(c=self.c, dim=self.dim)
        return [PoincarePoint(row, config) for row in self.centroids]

    def assign(self, points: torch.Tensor) -> torch.Tensor:
        """Nearest centroid per row; ties go to the lowest index."""
        return torch.argmin(_distance_matrix(points, self.centroids, self.c), dim=1)

    def signs_for(self, assignments: torch.Tensor) -> torch.Tensor:
        return self.sign_matrix[assignments]


@dataclass(frozen=True)
class TangentCoords:
    cluster: int
    vec: torch.Tensor


def _as_matrix(points: PointsLike) -> tuple[torch.Tensor, float | None]:
    if isinstance(points, torch.Tensor):
        return points.detach().to(DTYPE), None
    points = list(points)
    if not points:
        return torch.zeros(0, 0, dtype=DTYPE), None
    config = points[0].config
    if any(p.config != config for p in points):
        raise ManifoldError("All points must share one manifold config")
    return torch.stack([p.coords for p in points]), config.c


def _distance_matrix(x: torch.Tensor, centroids: torch.Tensor, c: float) -> torch.Tensor:
    ball = poincare_ball(c)
    return ball.distance(x.unsqueeze(1), centroids.unsqueeze(0))


def _kmeans_pp(x: torch.Tensor, k: int, c: float, generator: torch.Generator) -> torch.Tensor:
    n = x.shape[0]
    first = int(torch.randint(n, (1,), generator=generator))
    chosen = [first]
    closest = _distance_matrix(x, x[first : first + 1], c).squeeze(1) ** 2
    while len(chosen) < k:
        total = float(closest.sum())
        if total > 0:
            idx = int(torch.multinomial(closest / total, 1, generator=generator))
        else:
            idx = next(i for i in range(n) if i not in chosen)
        chosen.append(idx)
        closest = torch.minimum(closest, _distance_matrix(x, x[idx : idx + 1], c).squeeze(1) ** 2)
    return x[chosen].clone()


def _tangent_mean(members: torch.Tensor, start: torch.Tensor, c: float) -> torch.Tensor:
    if bool((members == members[0]).all()):
        return members[0].clone()
    ball = poincare_ball(c)
    m = start
    for _ in range(REFINE_STEPS):
        step = ball.logmap(m.unsqueeze(0), members).mean(dim=0)
        m = ball.project(ball.expmap(m, step))
    return m


def hkmeans_fit(
    points: PointsLike, k: int, max_iters: int = 50, seed: int = 0, c: float | None = None
) -> ClusterModel:
    """Cluster Poincaré points with k-means++ seeding and tangent-mean updates.

    ``c`` is taken from the points when they are ``PoincarePoint`` objects and
    defaults to 1.0 for raw tensors.
    """
    x, point_c = _as_matrix(points)
    c = float(c if c is not None else (point_c if point_c is not None else 1.0))
    n = x.shape[0]
    if n == 0:
        raise ManifoldError("Cannot cluster an empty point set")
    if not 1 <= k <= n:
        raise ManifoldError(f"k must lie in [1, {n}], got {k}")

    generator = torch.Generator().manual_seed(seed)
    centroids = _kmeans_pp(x, k, c, generator)
    dist = _distance_matrix(x, centroids, c)
    assignments = torch.argmin(dist, dim=1)
    trace = [float(dist.gather(1, assignments[:, None]).sum())]

    for iteration in range(max_iters):
        new_centroids = centroids.clone()
        for j in range(k):
            members = x[assignments == j]
            if members.shape[0] == 0:
                continue
            candidate = _tangent_mean(members, centroids[j], c)
            old_cost = _distance_matrix(members, centroids[j : j + 1], c).sum()
            new_cost = _distance_matrix(members, candidate.unsqueeze(0), c).sum()
            if new_cost <= old_cost:
                new_centroids[j] = candidate
        centroids = new_centroids

        dist = _distance_matrix(x, centroids, c)
        new_assignments = torch.argmin(dist, dim=1)
        for j in range(k):
            if not bool((new_assignments == j).any()):
                own = dist.gather(1, new_assignments[:, None]).squeeze(1)
                far = int(torch.argmax(own))
                logger.debug(f"Re-seeding empty cluster {j} at point {far}")
                centroids[j] = x[far]
                dist = _distance_matrix(x, centroids, c)
                new_assignments = torch.argmin(dist, dim=1)
        trace.append(float(dist.gather(1, new_assignments[:, None]).sum()))

        stable = bool(torch.equal(new_assignments, assignments))
        assignments = new_assignments
        if stable:
            logger.debug(f"h-kmeans converged after {iteration + 1} iterations")
            break

    counts = torch.bincount(assignments, minlength=k).to(DTYPE)
    return ClusterModel(
        k=k,
        c=c,
        centroids=centroids,
        assignments=assignments,
        sign_matrix=_signs(poincare_ball(c).logmap0(centroids)),
        proportions=counts / n,
        objective_trace=trace,
    )


def _signs(x: torch.Tensor) -> torch.Tensor:
    return torch.where(x < 0, -torch.ones_like(x), torch.ones_like(x))


def direction_matrix(model: ClusterModel) -> torch.Tensor:
    """Per-cluster coordinate signs of the origin log-map of the centroids, sgn(0) = +1."""
    return _signs(poincare_ball(model.c).logmap0(model.centroids))


def tangent_coordinates(
    points: torch.Tensor, model: ClusterModel, assignments: torch.Tensor | None = None
) -> torch.Tensor:
    """Log-map every point at its cluster centroid, stacked as an ``n x d`` matrix."""
    if assignments is None:
        assignments = model.assign(points)
    return poincare_ball(model.c).logmap(model.centroids[assignments], points)


def project_to_tangent(points: PointsLike, model: ClusterModel) -> List[TangentCoords]:
    x, _ = _as_matrix(points)
    assignments = model.assign(x)
    vecs = tangent_coordinates(x, model, assignments)
    return [TangentCoords(int(a), v) for a, v in zip(assignments, vecs)]


def tangent_vectors(points: Sequence[PoincarePoint], model: ClusterModel) -> List[TangentVector]:
    """Typed view of ``project_to_tangent`` with each vector based at its centroid."""
    centroids = model.centroid_points()
    return [TangentVector(centroids[t.cluster], t.vec) for t in project_to_tangent(points, model)]
