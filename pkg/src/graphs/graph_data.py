"""Graph containers, batching and JSONL persistence."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import torch

from ..errors import GraphFormatError

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


@dataclass
class GraphData:
    """Simple undirected graph on nodes ``0..n-1`` with optional features and labels."""

    n: int
    edges: List[Edge] = field(default_factory=list)
    features: Optional[np.ndarray] = None
    labels: Optional[List[int]] = None

    def __post_init__(self):
        if self.n < 0:
            raise GraphFormatError(f"Node count must be nonnegative, got {self.n}")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphFormatError(f"Self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphFormatError(f"Edge ({i}, {j}) out of range for n={self.n}")
            normalized.add((min(i, j), max(i, j)))
        self.edges = sorted(normalized)
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != self.n:
                raise GraphFormatError(
                    f"Features must be an n x f matrix, got {self.features.shape}"
                )
        if self.labels is not None:
            self.labels = [int(v) for v in self.labels]
            if len(self.labels) != self.n:
                raise GraphFormatError(f"Expected {self.n} labels, got {len(self.labels)}")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def edge_index(self) -> torch.Tensor:
        if not self.edges:
            return torch.zeros(2, 0, dtype=torch.long)
        return torch.tensor(self.edges, dtype=torch.long).t().contiguous()

    def adjacency(self) -> torch.Tensor:
        adj = torch.zeros(self.n, self.n, dtype=torch.float64)
        if self.edges:
            idx = self.edge_index()
            adj[idx[0], idx[1]] = 1.0
            adj[idx[1], idx[0]] = 1.0
        return adj

    def normalized_adjacency(self) -> torch.Tensor:
        return normalized_adjacency(self.n, self.edge_index())

    def degree_features(self, cap: int) -> torch.Tensor:
        """One-hot of the degree clamped to ``cap``."""
        deg = torch.as_tensor(np.minimum(self.degrees(), cap), dtype=torch.long)
        return torch.nn.functional.one_hot(deg, num_classes=cap + 1).to(torch.float64)

    def node_features(self, cap: int) -> torch.Tensor:
        if self.features is not None:
            return torch.as_tensor(self.features, dtype=torch.float64)
        return self.degree_features(cap)

    def non_edges(self) -> List[Edge]:
        present = set(self.edges)
        return [
            (i, j) for i in range(self.n) for j in range(i + 1, self.n) if (i, j) not in present
        ]

    def permute(self, perm: Sequence[int]) -> "GraphData":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.n)):
            raise GraphFormatError("perm must be a permutation of range(n)")
        inverse = np.argsort(perm)
        return GraphData(
            n=self.n,
            edges=[(perm[i], perm[j]) for i, j in self.edges],
            features=None if self.features is None else self.features[inverse],
            labels=None if self.labels is None else [self.labels[k] for k in inverse],
        )

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g

    @classmethod
    def from_networkx(cls, g: nx.Graph, labels: Optional[List[int]] = None) -> "GraphData":
        g = nx.convert_node_labels_to_integers(g)
        edges = [(i, j) for i, j in g.edges() if i != j]
        return cls(n=g.number_of_nodes(), edges=edges, labels=labels)

    def to_dict(self) -> Dict:
        record: Dict = {"n": self.n, "edges": [list(e) for e in self.edges]}
        if self.features is not None:
            record["features"] = self.features.tolist()
        if self.labels is not None:
            record["labels"] = list(self.labels)
        return record

    @classmethod
    def from_dict(cls, record: Dict) -> "GraphData":
        if not isinstance(record, dict) or "n" not in record or "edges" not in record:
            raise GraphFormatError("Graph records need 'n' and 'edges'")
        return cls(
            n=int(record["n"]),
            edges=[(int(e[0]), int(e[1])) for e in record["edges"]],
            features=record.get("features"),
            labels=record.get("labels"),
        )


@dataclass
class GraphSet:
    """Ordered collection of graphs."""

    graphs: List[GraphData] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self) -> Iterator[GraphData]:
        return iter(self.graphs)

    def __getitem__(self, idx: int) -> GraphData:
        return self.graphs[idx]

    def node_count_histogram(self) -> Dict[int, int]:
        return dict(sorted(Counter(g.n for g in self.graphs).items()))

    def to_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            for g in self.graphs:
                f.write(json.dumps(g.to_dict()) + "\n")
        logger.info(f"Wrote {len(self.graphs)} graphs to {path}")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "GraphSet":
        path = Path(path)
        if not path.is_file():
            raise GraphFormatError(f"Graph file not found: {path}")
        graphs = []
        with path.open(encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    graphs.append(GraphData.from_dict(json.loads(line)))
                except json.JSONDecodeError as e:
                    raise GraphFormatError(f"invalid JSON ({e.msg})", line=lineno) from e
                except GraphFormatError as e:
                    raise GraphFormatError(str(e), line=lineno) from e
                except (KeyError, IndexError, TypeError, ValueError) as e:
                    raise GraphFormatError(f"malformed graph record ({e})", line=lineno) from e
        logger.info(f"Loaded {len(graphs)} graphs from {path}")
        return cls(graphs)


def normalized_adjacency(n: int, edge_index: torch.Tensor) -> torch.Tensor:
    """Sparse ``D^-1/2 (A + I) D^-1/2`` from an undirected edge index (one direction per edge)."""
    loops = torch.arange(n, dtype=torch.long)
    row = torch.cat([edge_index[0], edge_index[1], loops])
    col = torch.cat([edge_index[1], edge_index[0], loops])
    deg = torch.bincount(row, minlength=n).to(torch.float64)
    inv_sqrt = deg.pow(-0.5)
    values = inv_sqrt[row] * inv_sqrt[col]
    return torch.sparse_coo_tensor(torch.stack([row, col]), values, (n, n)).coalesce()


@dataclass
class GraphBatch:
    """Disjoint union of graphs with global node indices."""

    graphs: List[GraphData]
    features: torch.Tensor
    edge_index: torch.Tensor
    offsets: List[int]
    graph_of_node: torch.Tensor

    @property
    def num_nodes(self) -> int:
        return int(self.graph_of_node.shape[0])

    def normalized_adjacency(self, keep: Optional[torch.Tensor] = None) -> torch.Tensor:
        """``Â`` of the union; ``keep`` masks edges out (edge dropout)."""
        edge_index = self.edge_index if keep is None else self.edge_index[:, keep]
        return normalized_adjacency(self.num_nodes, edge_index)

    def split(self, rows: torch.Tensor) -> List[torch.Tensor]:
        """Cut a node-aligned tensor back into per-graph pieces."""
        return list(torch.split(rows, [g.n for g in self.graphs]))


def batch_graphs(graphs: Iterable[GraphData], feature_cap: int) -> GraphBatch:
    graphs = list(graphs)
    offsets, edge_parts, feature_parts, owner = [], [], [], []
    offset = 0
    for gid, g in enumerate(graphs):
        offsets.append(offset)
        edge_parts.append(g.edge_index() + offset)
        feature_parts.append(g.node_features(feature_cap))
        owner.append(torch.full((g.n,), gid, dtype=torch.long))
        offset += g.n
    widths = {f.shape[1] for f in feature_parts}
    if len(widths) > 1:
        raise GraphFormatError(
            f"Graphs carry feature matrices of different widths: {sorted(widths)}"
        )
    return GraphBatch(
        graphs=graphs,
        features=torch.cat(feature_parts) if feature_parts else torch.zeros(0, feature_cap + 1),
        edge_index=(
            torch.cat(edge_parts, dim=1) if edge_parts else torch.zeros(2, 0, dtype=torch.long)
        ),
        offsets=offsets,
        graph_of_node=torch.cat(owner) if owner else torch.zeros(0, dtype=torch.long),
    )
