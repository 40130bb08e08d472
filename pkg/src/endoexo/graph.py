"""Sparse undirected friendship networks: loading, generation, and peer queries.

The adjacency structure is a symmetric boolean CSR matrix without
self-loops. Internal node indices are dense; the mapping back to the
external user ids found in input files is kept in ``ext_ids``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import networkx as nx
import scipy.sparse as sp

__all__ = [
    "GraphFormatError",
    "SocialGraph",
    "graph_from_edges",
    "load_edge_list",
    "write_edge_list",
    "configuration_model",
    "powerlaw_cluster_graph",
    "active_peer_counts",
]


class GraphFormatError(ValueError):
    """Raised when an input graph file cannot be parsed."""


@dataclass(frozen=True)
class SocialGraph:
    """Immutable undirected friendship network in CSR form.

    Attributes
    ----------
    n_nodes : int
        Number of nodes.
    adjacency : scipy.sparse.csr_matrix
        Symmetric boolean (stored as int8) adjacency, no self-loops.
    ext_ids : ndarray of int
        External user id of each internal node. After a cascade is
        attached, internal order is sorted by activation time, so this
        array realizes the external-id -> internal-index permutation.
    """

    n_nodes: int
    adjacency: sp.csr_matrix
    ext_ids: np.ndarray

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.nnz // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    @property
    def id_map(self) -> dict[int, int]:
        """External user id -> internal index."""
        return {int(e): i for i, e in enumerate(self.ext_ids)}

    def peers(self, i: int) -> np.ndarray:
        """Internal indices of the peers of node ``i``."""
        lo, hi = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[lo:hi]

    def edges(self) -> np.ndarray:
        """All undirected edges as an (m, 2) array of internal indices, i < j."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]])

    def reordered(self, perm: np.ndarray) -> "SocialGraph":
        """New graph whose internal node k is this graph's node ``perm[k]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self.n_nodes,) or not np.array_equal(
            np.sort(perm), np.arange(self.n_nodes)
        ):
            raise ValueError("perm must be a permutation of all node indices")
        adj = self.adjacency[perm][:, perm].tocsr()
        adj.sort_indices()
        return SocialGraph(self.n_nodes, adj, self.ext_ids[perm])

    def with_isolated(self, extra_ext_ids: np.ndarray) -> "SocialGraph":
        """New graph extended with degree-0 nodes for the given external ids."""
        extra = np.asarray(extra_ext_ids, dtype=np.int64)
        if extra.size == 0:
            return self
        n = self.n_nodes + extra.size
        adj = sp.csr_matrix(
            (self.adjacency.data, self.adjacency.indices, np.concatenate(
                [self.adjacency.indptr,
                 np.full(extra.size, self.adjacency.indptr[-1])])),
            shape=(n, n),
        )
        return SocialGraph(n, adj, np.concatenate([self.ext_ids, extra]))


def graph_from_edges(edges, ext_ids=None, n_nodes=None) -> SocialGraph:
    """Build a SocialGraph from an iterable of (i, j) pairs.

    Self-loops are dropped and duplicate/reciprocal pairs collapse to a
    single undirected edge. When ``ext_ids`` is None, node ids are taken
    as already-dense internal indices 0..n-1.
    """
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    if n_nodes is None:
        n_nodes = int(edges.max()) + 1 if edges.size else 0
    keep = edges[:, 0] != edges[:, 1]
    edges = edges[keep]
    row = np.concatenate([edges[:, 0], edges[:, 1]])
    col = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(row.size, dtype=np.int8)
    adj = sp.csr_matrix((data, (row, col)), shape=(n_nodes, n_nodes))
    adj.data[:] = 1  # collapse duplicates accumulated by coo summation
    adj.sort_indices()
    if ext_ids is None:
        ext_ids = np.arange(n_nodes, dtype=np.int64)
    return SocialGraph(n_nodes, adj, np.asarray(ext_ids, dtype=np.int64))


def _densify(raw_edges: list[tuple[int, int]],
             raw_nodes: list[int]) -> SocialGraph:
    ids = np.unique(np.asarray(
        raw_nodes + [v for e in raw_edges for v in e], dtype=np.int64))
    index = {int(e): i for i, e in enumerate(ids)}
    edges = [(index[a], index[b]) for a, b in raw_edges]
    return graph_from_edges(edges, ext_ids=ids, n_nodes=ids.size)


def load_edge_list(path, format: str = "edge-list") -> SocialGraph:
    """Load an undirected graph from an edge list or a GML subset.

    Edge list: one edge per line, two whitespace-separated non-negative
    integer ids; ``#`` lines are comments. GML: only ``node [ id N ]``
    and ``edge [ source A target B ]`` records are honoured.

    External ids are densely re-indexed (sorted order); the id map is
    preserved on the returned graph.
    """
    if format == "edge-list":
        raw_edges = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                tokens = line.split()
                if len(tokens) != 2:
                    raise GraphFormatError(
                        f"{path}:{lineno}: expected 2 node ids, got {len(tokens)}")
                try:
                    a, b = int(tokens[0]), int(tokens[1])
                except ValueError:
                    raise GraphFormatError(
                        f"{path}:{lineno}: non-integer node id in {tokens!r}")
                if a < 0 or b < 0:
                    raise GraphFormatError(
                        f"{path}:{lineno}: negative node id")
                raw_edges.append((a, b))
        return _densify(raw_edges, [])
    elif format == "gml":
        return _load_gml(path)
    raise GraphFormatError(f"unknown graph format {format!r}")


def _load_gml(path) -> SocialGraph:
    """Minimal GML reader: node id / edge source-target records only."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    raw_nodes: list[int] = []
    raw_edges: list[tuple[int, int]] = []
    i = 0

    def _intval(key, j):
        if j + 1 >= len(tokens):
            raise GraphFormatError(f"{path}: truncated {key} value")
        try:
            return int(tokens[j + 1])
        except ValueError:
            raise GraphFormatError(
                f"{path}: non-integer {key} value {tokens[j + 1]!r}")

    while i < len(tokens):
        tok = tokens[i]
        if tok == "node":
            node_id = None
            j = i + 1
            depth = 0
            while j < len(tokens):
                if tokens[j] == "[":
                    depth += 1
                elif tokens[j] == "]":
                    depth -= 1
                    if depth == 0:
                        break
                elif tokens[j] == "id" and depth == 1:
                    node_id = _intval("id", j)
                j += 1
            if node_id is None:
                raise GraphFormatError(f"{path}: node record without id")
            raw_nodes.append(node_id)
            i = j + 1
        elif tok == "edge":
            src = dst = None
            j = i + 1
            depth = 0
            while j < len(tokens):
                if tokens[j] == "[":
                    depth += 1
                elif tokens[j] == "]":
                    depth -= 1
                    if depth == 0:
                        break
                elif tokens[j] == "source" and depth == 1:
                    src = _intval("source", j)
                elif tokens[j] == "target" and depth == 1:
                    dst = _intval("target", j)
                j += 1
            if src is None or dst is None:
                raise GraphFormatError(f"{path}: edge record missing source/target")
            raw_edges.append((src, dst))
            i = j + 1
        else:
            i += 1
    return _densify(raw_edges, raw_nodes)


def write_edge_list(g: SocialGraph, path) -> None:
    """Write one undirected edge per line using external ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in g.edges():
            fh.write(f"{g.ext_ids[i]} {g.ext_ids[j]}\n")


def configuration_model(degrees, rng_seed: int) -> SocialGraph:
    """Random graph with (approximately) the given degree sequence.

    Uniform stub matching; self-loops and multi-edges produced by the
    matching are discarded afterwards, so realized degrees can fall
    below the requested ones but never exceed them.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    if degrees.size and degrees.min() < 0:
        raise ValueError("degrees must be non-negative")
    total = int(degrees.sum())
    if total % 2 != 0:
        raise ValueError("sum of degrees must be even")
    rng = np.random.default_rng(rng_seed)
    stubs = np.repeat(np.arange(degrees.size), degrees)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    return graph_from_edges(pairs, n_nodes=degrees.size)


def powerlaw_cluster_graph(n: int, m: int, p: float, rng_seed: int) -> SocialGraph:
    """Holme-Kim growing graph: m edges per added node, triangle step w.p. p."""
    if m < 1 or n <= m:
        raise ValueError(f"need n > m >= 1, got n={n}, m={m}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"triangle probability must be in [0, 1], got {p}")
    g = nx.powerlaw_cluster_graph(n, m, p, seed=rng_seed)
    return graph_from_edges(g.edges(), n_nodes=n)


def active_peer_counts(g: SocialGraph, active_mask: np.ndarray) -> np.ndarray:
    """Number of active peers of every node, via one sparse mat-vec."""
    active_mask = np.asarray(active_mask)
    if active_mask.shape != (g.n_nodes,):
        raise ValueError(
            f"mask length {active_mask.shape} does not match {g.n_nodes} nodes")
    return g.adjacency.dot(active_mask.astype(np.int64))
