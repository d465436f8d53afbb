"""Graph-set comparison: RBF-kernel MMD over graph statistics plus F1 pr / F1 dc."""

from __future__ import annotations

import concurrent.futures
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field
from scipy.linalg import eigvalsh
from sklearn.metrics import pairwise_distances

from ..config import Settings, settings as default_settings
from ..errors import MetricError
from .graph_data import GraphData, GraphSet

logger = logging.getLogger(__name__)


class MMDReport(BaseModel):
    """Distances between a reference and a generated graph set."""

    degree: float = Field(ge=0, description="Degree-histogram MMD")
    cluster: float = Field(ge=0, description="Clustering-coefficient MMD")
    spectre: float = Field(ge=0, description="Laplacian-spectrum MMD")
    f1_pr: float = Field(ge=0, le=1, description="Harmonic mean of precision and recall")
    f1_dc: float = Field(ge=0, description="Harmonic mean of density and coverage")
    precision: float = 0.0
    recall: float = 0.0
    density: float = 0.0
    coverage: float = 0.0
    n_reference: int = 0
    n_generated: int = 0
    k_nn: int = Field(default=0, ge=0, description="Neighbours used for the k-NN metrics")


def _require_nonempty(g: GraphData) -> None:
    if g.n == 0:
        raise MetricError("Graph statistics are undefined for a 0-node graph")


def degree_hist(g: GraphData, max_deg: int) -> np.ndarray:
    _require_nonempty(g)
    deg = np.minimum(g.degrees(), max_deg)
    return np.bincount(deg, minlength=max_deg + 1).astype(np.float64) / g.n


def clustering_hist(g: GraphData, bins: int = 100) -> np.ndarray:
    _require_nonempty(g)
    coeffs = list(nx.clustering(g.to_networkx()).values())
    hist, _ = np.histogram(coeffs, bins=bins, range=(0.0, 1.0))
    return hist.astype(np.float64) / hist.sum()


def normalized_laplacian_spectrum(g: GraphData) -> np.ndarray:
    _require_nonempty(g)
    lap = nx.normalized_laplacian_matrix(g.to_networkx(), nodelist=range(g.n)).toarray()
    return np.clip(eigvalsh(lap), 0.0, 2.0)


def laplacian_spectrum_hist(g: GraphData, bins: int = 200) -> np.ndarray:
    hist, _ = np.histogram(normalized_laplacian_spectrum(g), bins=bins, range=(0.0, 2.0))
    return hist.astype(np.float64) / hist.sum()


def _stack(vectors: Sequence[np.ndarray], width: Optional[int] = None) -> np.ndarray:
    width = width or max(len(v) for v in vectors)
    out = np.zeros((len(vectors), width))
    for i, v in enumerate(vectors):
        out[i, : len(v)] = v
    return out


def _sq_dist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, exact zero for identical rows."""
    return pairwise_distances(x, y, metric="sqeuclidean")


def _pair(
    set_a: Sequence[np.ndarray], set_b: Sequence[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    if len(set_a) == 0 or len(set_b) == 0:
        raise MetricError("Both sets must be nonempty")
    width = max(len(v) for v in list(set_a) + list(set_b))
    return _stack(set_a, width), _stack(set_b, width)


def mmd_squared(set_a: Sequence[np.ndarray], set_b: Sequence[np.ndarray], sigma: float) -> float:
    """Biased (V-statistic) MMD² with a Gaussian kernel; may be slightly negative from rounding."""
    if not sigma > 0:
        raise MetricError(f"sigma must be positive, got {sigma}")
    a, b = _pair(set_a, set_b)
    gamma = 1.0 / (2 * sigma * sigma)
    k_aa = np.exp(-gamma * _sq_dist(a, a))
    k_bb = np.exp(-gamma * _sq_dist(b, b))
    k_ab = np.exp(-gamma * _sq_dist(a, b))
    return float(k_aa.mean() + k_bb.mean() - 2 * k_ab.mean())


def mmd_rbf(set_a: Sequence[np.ndarray], set_b: Sequence[np.ndarray], sigma: float) -> float:
    return float(np.sqrt(max(mmd_squared(set_a, set_b, sigma), 0.0)))


def median_heuristic(set_a: Sequence[np.ndarray], set_b: Sequence[np.ndarray]) -> float:
    """Median pairwise distance of the pooled sets (1.0 when every distance is zero)."""
    a, b = _pair(set_a, set_b)
    pooled = np.vstack([a, b])
    dist = np.sqrt(_sq_dist(pooled, pooled))
    upper = dist[np.triu_indices(len(pooled), k=1)]
    upper = upper[upper > 0]
    return float(np.median(upper)) if upper.size else 1.0


def prdc(real: Sequence[np.ndarray], fake: Sequence[np.ndarray], k_nn: int) -> Dict[str, float]:
    """Improved precision/recall and density/coverage with closed k-NN balls."""
    real_x, fake_x = _pair(real, fake)
    if len(real_x) <= k_nn or len(fake_x) <= k_nn:
        raise MetricError(f"Both sets need more than k_nn={k_nn} members")
    real_radii = np.sort(np.sqrt(_sq_dist(real_x, real_x)), axis=1)[:, k_nn]
    fake_radii = np.sort(np.sqrt(_sq_dist(fake_x, fake_x)), axis=1)[:, k_nn]
    dist = np.sqrt(_sq_dist(real_x, fake_x))

    in_real_ball = dist <= real_radii[:, None]
    return {
        "precision": float(in_real_ball.any(axis=0).mean()),
        "recall": float((dist <= fake_radii[None, :]).any(axis=1).mean()),
        "density": float(in_real_ball.sum(axis=0).mean() / k_nn),
        "coverage": float((dist.min(axis=1) <= real_radii).mean()),
    }


def _harmonic(a: float, b: float) -> float:
    return 0.0 if a <= 0 or b <= 0 else 2 * a * b / (a + b)


def f1_pr(set_a: Sequence[np.ndarray], set_b: Sequence[np.ndarray], k_nn: int = 5) -> float:
    scores = prdc(set_a, set_b, k_nn)
    return _harmonic(scores["precision"], scores["recall"])


def f1_dc(set_a: Sequence[np.ndarray], set_b: Sequence[np.ndarray], k_nn: int = 5) -> float:
    scores = prdc(set_a, set_b, k_nn)
    return _harmonic(scores["density"], scores["coverage"])


def _descriptors(
    graphs: List[GraphData], max_deg: int, config: Settings
) -> Tuple[List[np.ndarray], List[np.ndarray], List[np.ndarray]]:
    def worker(g: GraphData) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            degree_hist(g, max_deg),
            clustering_hist(g, config.clustering_bins),
            laplacian_spectrum_hist(g, config.spectrum_bins),
        )

    with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as executor:
        rows = list(executor.map(worker, graphs))
    return [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]


def evaluate(
    reference: GraphSet, generated: GraphSet, config: Optional[Settings] = None
) -> MMDReport:
    """Compare two graph sets on degree, clustering and spectrum statistics."""
    config = config or default_settings
    ref = [g for g in reference if g.n > 0]
    gen = [g for g in generated if g.n > 0]
    skipped = len(generated) - len(gen)
    if skipped:
        logger.warning(f"⚠️ Skipping {skipped} empty generated graphs")
    if len(ref) != len(reference):
        raise MetricError("Reference set contains 0-node graphs")
    if not ref or not gen:
        raise MetricError("Both graph sets must contain at least one nonempty graph")

    max_deg = int(max(int(g.degrees().max(initial=0)) for g in ref + gen))
    ref_desc = _descriptors(ref, max_deg, config)
    gen_desc = _descriptors(gen, max_deg, config)

    distances = {}
    for name, a, b in zip(("degree", "cluster", "spectre"), ref_desc, gen_desc):
        sigma = median_heuristic(a, b)
        distances[name] = mmd_rbf(a, b, sigma)
        logger.debug(f"{name} MMD {distances[name]:.6f} (sigma={sigma:.4f})")

    ref_vec = [np.concatenate(parts) for parts in zip(*ref_desc)]
    gen_vec = [np.concatenate(parts) for parts in zip(*gen_desc)]
    k_nn = max(min(config.prdc_k, len(ref_vec) - 1, len(gen_vec) - 1), 0)
    if 1 <= k_nn < config.prdc_k:
        logger.warning(
            f"⚠️ Only {len(ref_vec)} reference and {len(gen_vec)} generated graphs; "
            f"k-NN metrics use k={k_nn} instead of {config.prdc_k}"
        )
    if k_nn >= 1:
        scores = prdc(ref_vec, gen_vec, k_nn)
    else:
        logger.warning("⚠️ Sets too small for k-NN metrics; reporting zeros")
        scores = {"precision": 0.0, "recall": 0.0, "density": 0.0, "coverage": 0.0}

    report = MMDReport(
        **distances,
        f1_pr=_harmonic(scores["precision"], scores["recall"]),
        f1_dc=_harmonic(scores["density"], scores["coverage"]),
        n_reference=len(ref),
        n_generated=len(gen),
        k_nn=k_nn,
        **scores,
    )
    logger.info(
        f"📊 degree={report.degree:.4f} cluster={report.cluster:.4f} "
        f"spectre={report.spectre:.4f} f1_pr={report.f1_pr:.4f} f1_dc={report.f1_dc:.4f}"
    )
    return report
