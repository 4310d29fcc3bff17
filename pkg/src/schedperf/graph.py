"""Pipeline DAG representation and the row-normalized adjacency transform.

Every graph convolution in the model multiplies node embeddings by the
matrix produced here: self-loops are added to the raw adjacency and each
row is normalized to sum to 1, so a node's update averages its own state
with the states of its producers.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphStructureError


@dataclass(frozen=True)
class PipelineGraph:
    """Directed acyclic graph of computation stages.

    Edges are ordered ``(producer, consumer)`` pairs. Node payload ids are
    opaque strings linking each node to its feature records.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    node_payload_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.num_nodes < 0:
            raise GraphStructureError(f"num_nodes must be >= 0, got {self.num_nodes}")
        edges = tuple((int(p), int(c)) for p, c in self.edges)
        object.__setattr__(self, "edges", edges)
        if not self.node_payload_ids:
            object.__setattr__(
                self, "node_payload_ids", tuple(f"n{i}" for i in range(self.num_nodes))
            )
        if len(self.node_payload_ids) != self.num_nodes:
            raise GraphStructureError(
                f"expected {self.num_nodes} payload ids, got {len(self.node_payload_ids)}"
            )
        seen = set()
        for p, c in edges:
            if not (0 <= p < self.num_nodes and 0 <= c < self.num_nodes):
                raise GraphStructureError(f"edge ({p}, {c}) out of range", edges=[(p, c)])
            if p == c:
                raise GraphStructureError(f"self-edge on node {p}", edges=[(p, c)])
            if (p, c) in seen:
                raise GraphStructureError(f"duplicate edge ({p}, {c})", edges=[(p, c)])
            seen.add((p, c))
        topological_order(self)  # raises on cycles

    def producers_of(self, node: int) -> list[int]:
        return [p for p, c in self.edges if c == node]

    def consumers_of(self, node: int) -> list[int]:
        return [c for p, c in self.edges if p == node]

    def out_degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for p, _ in self.edges:
            deg[p] += 1
        return deg

    def sinks(self) -> list[int]:
        return [i for i, d in enumerate(self.out_degrees()) if d == 0]

    def longest_path_nodes(self) -> int:
        """Number of nodes on the longest directed path (1 for an edgeless graph)."""
        if self.num_nodes == 0:
            return 0
        depth = np.ones(self.num_nodes, dtype=np.int64)
        for node in topological_order(self):
            for c in self.consumers_of(node):
                depth[c] = max(depth[c], depth[node] + 1)
        return int(depth.max())


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Dense row-normalized adjacency with self-loops; rows sum to 1."""

    matrix: np.ndarray = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]


def topological_order(graph: PipelineGraph) -> list[int]:
    """Topological order with ascending-index tie-breaking.

    Raises GraphStructureError carrying the offending edges when a cycle
    makes the order impossible.
    """
    indeg = [0] * graph.num_nodes
    outs: list[list[int]] = [[] for _ in range(graph.num_nodes)]
    for p, c in graph.edges:
        indeg[c] += 1
        outs[p].append(c)
    ready = [i for i in range(graph.num_nodes) if indeg[i] == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        node = heapq.heappop(ready)
        order.append(node)
        for c in outs[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) < graph.num_nodes:
        stuck = set(range(graph.num_nodes)) - set(order)
        cyc_edges = [(p, c) for p, c in graph.edges if p in stuck and c in stuck]
        raise GraphStructureError(
            f"cycle among nodes {sorted(stuck)}", edges=cyc_edges
        )
    return order


def normalize_adjacency(graph: PipelineGraph) -> NormalizedAdjacency:
    """Row-normalized (A + I) where A[i, j] = 1 iff j is a producer of i.

    Each consumer row averages over itself and its producers, so message
    passing pulls information along the data-flow direction.
    """
    n = graph.num_nodes
    if n == 0:
        raise GraphStructureError("cannot normalize a graph with zero nodes")
    a = np.eye(n, dtype=np.float64)
    for p, c in graph.edges:
        a[c, p] = 1.0
    a /= a.sum(axis=1, keepdims=True)
    return NormalizedAdjacency(a)


def batch_graphs(
    graphs: list[PipelineGraph],
) -> tuple[NormalizedAdjacency, list[int]]:
    """Block-diagonal composition of per-graph normalized adjacencies.

    Returns the composed matrix together with the start offset of each
    graph's node range. Off-diagonal blocks are exactly zero, so batched
    message passing cannot mix nodes across graphs.
    """
    if not graphs:
        raise ValueError("batch_graphs requires at least one graph")
    blocks = [normalize_adjacency(g).matrix for g in graphs]
    sizes = [b.shape[0] for b in blocks]
    total = sum(sizes)
    out = np.zeros((total, total), dtype=np.float64)
    offsets: list[int] = []
    at = 0
    for b, size in zip(blocks, sizes):
        offsets.append(at)
        out[at : at + size, at : at + size] = b
        at += size
    return NormalizedAdjacency(out), offsets
