"""Synthetic graph datasets and edge-list import/export."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import GraphFormatError
from .graph_data import Edge, GraphData, GraphSet

logger = logging.getLogger(__name__)


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def gen_sbm(
    n: int, blocks: Sequence[int], p_intra: float, q_inter: float, seed: int = 0
) -> GraphData:
    """Stochastic block model; node labels are block ids."""
    _check_probability("p_intra", p_intra)
    _check_probability("q_inter", q_inter)
    blocks = [int(b) for b in blocks]
    if any(b <= 0 for b in blocks) or sum(blocks) != n:
        raise ValueError(f"blocks {blocks} must be positive and sum to n={n}")
    probs = [
        [p_intra if a == b else q_inter for b in range(len(blocks))] for a in range(len(blocks))
    ]
    g = nx.stochastic_block_model(blocks, probs, seed=seed)
    labels = [block for block, size in enumerate(blocks) for _ in range(size)]
    return GraphData(n=n, edges=list(g.edges()), labels=labels)


def gen_ba(n: int, m_range: Tuple[int, int] = (1, 10), seed: int = 0) -> GraphData:
    """Preferential attachment where every new node draws its edge count from ``m_range``."""
    if n < 2:
        raise ValueError(f"Barabási–Albert graphs need n >= 2, got {n}")
    lo, hi = int(m_range[0]), int(m_range[1])
    if not 1 <= lo <= hi:
        raise ValueError(f"m_range must satisfy 1 <= low <= high, got {m_range}")
    rng = np.random.default_rng(seed)

    edges: List[Edge] = [(0, 1)]
    # each node appears once per incident edge
    endpoints = [0, 1]
    for v in range(2, n):
        m = min(int(rng.integers(lo, hi + 1)), v)
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(endpoints[int(rng.integers(len(endpoints)))])
        for u in sorted(targets):
            edges.append((u, v))
            endpoints.extend((u, v))
    return GraphData(n=n, edges=edges)


def gen_community(
    count: int,
    n_range: Tuple[int, int] = (12, 20),
    p: float = 0.3,
    inter_frac: float = 0.05,
    seed: int = 0,
) -> GraphSet:
    """Two-community graphs: ER(p) inside each half plus ceil(inter_frac * n) cross edges."""
    _check_probability("p", p)
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        half = n // 2
        labels = [0] * half + [1] * (n - half)
        edges: List[Edge] = []
        for i in range(n):
            for j in range(i + 1, n):
                if labels[i] == labels[j] and rng.random() < p:
                    edges.append((i, j))
        cross = [(i, j) for i in range(half) for j in range(half, n)]
        n_cross = min(math.ceil(inter_frac * n), len(cross))
        for idx in rng.choice(len(cross), size=n_cross, replace=False):
            edges.append(cross[int(idx)])
        graphs.append(GraphData(n=n, edges=edges, labels=labels))
    return GraphSet(graphs)


def gen_grid(rows: int, cols: int) -> GraphData:
    """2-D lattice with four-neighbour connectivity."""
    if rows < 1 or cols < 1:
        raise ValueError(f"Grid sizes must be positive, got {rows}x{cols}")
    g = nx.grid_2d_graph(rows, cols)
    return GraphData.from_networkx(nx.convert_node_labels_to_integers(g, ordering="sorted"))


def gen_fractal(depth: int) -> GraphData:
    """Self-similar tree where every internal node has degree three.

    The root gets three children and every other internal node two, repeated for
    ``depth`` levels.
    """
    if depth < 0:
        raise ValueError(f"depth must be nonnegative, got {depth}")
    edges: List[Edge] = []
    frontier = [0]
    n = 1
    for level in range(depth):
        next_frontier = []
        for parent in frontier:
            for _ in range(3 if level == 0 else 2):
                edges.append((parent, n))
                next_frontier.append(n)
                n += 1
        frontier = next_frontier
    return GraphData(n=n, edges=edges)


def gen_ego(n: int = 20, radius: int = 3, seed: int = 0, base_size: int = 200) -> GraphData:
    """Ego network (``ego-synthetic``) cut from a Barabási–Albert graph.

    The ball of ``radius`` hops around a random centre is truncated to the ``n``
    nodes closest to the centre (BFS order).
    """
    if n < 1 or radius < 0:
        raise ValueError(f"Need n >= 1 and radius >= 0, got n={n}, radius={radius}")
    rng = np.random.default_rng(seed)
    base = gen_ba(base_size, (1, 2), seed=int(rng.integers(2**31))).to_networkx()
    centre = int(rng.integers(base_size))
    hops = nx.single_source_shortest_path_length(base, centre, cutoff=radius)
    keep = sorted(hops, key=lambda v: (hops[v], v))[:n]
    return GraphData.from_networkx(base.subgraph(keep).copy())


def gen_ba_graphs(
    count: int,
    n_range: Tuple[int, int] = (20, 40),
    m_range: Tuple[int, int] = (4, 4),
    seed: int = 0,
) -> GraphSet:
    """Graph-level Barabási–Albert dataset."""
    rng = np.random.default_rng(seed)
    return GraphSet(
        [
            gen_ba(
                int(rng.integers(n_range[0], n_range[1] + 1)),
                m_range,
                seed=int(rng.integers(2**31)),
            )
            for _ in range(count)
        ]
    )


def import_edge_list(path: str | Path) -> GraphData:
    """Read whitespace-separated integer pairs; ``#`` starts a comment.

    A ``# nodes: N`` header fixes the node count, otherwise it is the largest
    index plus one. Duplicates and self-loops are dropped with a warning.
    """
    path = Path(path)
    if not path.is_file():
        raise GraphFormatError(f"Edge list not found: {path}")
    declared_n = None
    seen: set[Edge] = set()
    duplicates = self_loops = 0
    with path.open(encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("nodes:"):
                    try:
                        declared_n = int(body.split(":", 1)[1])
                    except ValueError as e:
                        raise GraphFormatError("bad node count header", line=lineno) from e
                continue
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise GraphFormatError(f"expected two node ids, got {line!r}", line=lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError as e:
                raise GraphFormatError(f"non-integer node id in {line!r}", line=lineno) from e
            if i < 0 or j < 0:
                raise GraphFormatError(f"negative node id in {line!r}", line=lineno)
            if i == j:
                self_loops += 1
                continue
            edge = (min(i, j), max(i, j))
            if edge in seen:
                duplicates += 1
                continue
            seen.add(edge)

    max_index = max((j for _, j in seen), default=-1)
    n = declared_n if declared_n is not None else max_index + 1
    if n <= 0:
        raise GraphFormatError(f"Edge list {path} describes a 0-node graph")
    if max_index >= n:
        raise GraphFormatError(f"Edge index {max_index} exceeds declared node count {n}")
    if duplicates or self_loops:
        logger.warning(
            f"⚠️ {path.name}: dropped {duplicates} duplicate edges and {self_loops} self-loops"
        )
    return GraphData(n=n, edges=sorted(seen))


def export_edge_list(g: GraphData, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"# nodes: {g.n}\n")
        for i, j in g.edges:
            f.write(f"{i} {j}\n")


DATASETS: Dict[str, Callable[[int, int], GraphSet]] = {
    "community": lambda count, seed: gen_community(count, seed=seed),
    "grid": lambda count, seed: GraphSet(
        [gen_grid(r, c) for r, c in _grid_sizes(count, seed)]
    ),
    "fractal": lambda count, seed: GraphSet([gen_fractal(1 + i % 4) for i in range(count)]),
    "ego-synthetic": lambda count, seed: GraphSet(
        [gen_ego(20, 3, seed=seed * 100_003 + i) for i in range(count)]
    ),
    "ba-g": lambda count, seed: gen_ba_graphs(count, seed=seed),
    "sbm": lambda count, seed: GraphSet(
        [gen_sbm(1000, [200] * 5, 0.21, 0.025, seed=seed + i) for i in range(count)]
    ),
    "ba": lambda count, seed: GraphSet(
        [gen_ba(1000, (1, 10), seed=seed + i) for i in range(count)]
    ),
}


def _grid_sizes(count: int, seed: int) -> List[Tuple[int, int]]:
    rng = np.random.default_rng(seed)
    return [(int(rng.integers(10, 21)), int(rng.integers(10, 21))) for _ in range(count)]


def generate_dataset(name: str, count: int, seed: int = 0) -> GraphSet:
    """Named dataset as used by the ``gen-data`` command."""
    if name not in DATASETS:
        raise ValueError(f"Unknown dataset {name!r}; choose from {', '.join(sorted(DATASETS))}")
    graphs = DATASETS[name](count, seed)
    logger.info(f"✅ Generated {len(graphs)} {name} graphs")
    return graphs
