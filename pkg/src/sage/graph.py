"""Immutable undirected graph storage plus exact structural measures.

The adjacency is kept in compressed-row form: ``indices[indptr[v]:indptr[v+1]]``
are the neighbors of ``v``.  Graphs built through :func:`build_graph` have
sorted, deduplicated, self-loop-free rows; :func:`cap_degrees` may leave a
row a strict subset of its symmetric original, which is fine because capped
rows are only ever used as sampling pools.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, NamedTuple, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class Graph:
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    ids: tuple

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        """Number of undirected edges (each stored twice in ``indices``)."""
        return len(self.indices) // 2

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def id_to_index(self) -> dict:
        return {node_id: i for i, node_id in enumerate(self.ids)}

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def index_of(self, node_id) -> int:
        try:
            return self.id_to_index[node_id]
        except KeyError:
            raise DataError(f"unknown node id: {node_id!r}") from None

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with u < v, sorted."""
        u = np.repeat(np.arange(self.node_count), self.degrees)
        v = self.indices
        keep = u < v
        return np.stack([u[keep], v[keep]], axis=1)


def build_graph(edges: Sequence[tuple], features, ids: Sequence[Hashable]) -> Graph:
    """Build a symmetric, deduplicated graph from an edge list.

    Self-loops are dropped.  Internal indices follow the order of ``ids``,
    which makes construction fully deterministic.
    """
    ids = tuple(ids)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate node ids")
    n = len(ids)
    id_to_index = {node_id: i for i, node_id in enumerate(ids)}

    features = np.asarray(features, dtype=np.float32)
    if features.ndim != 2 or features.shape[0] != n:
        raise DataError(
            f"feature matrix has {features.shape[0] if features.ndim == 2 else '?'} rows, expected {n}"
        )
    if not np.isfinite(features).all():
        raise DataError("non-finite feature value")

    us, vs = [], []
    for a, b in edges:
        try:
            ia, ib = id_to_index[a], id_to_index[b]
        except KeyError as exc:
            raise DataError(f"edge endpoint not in ids: {exc.args[0]!r}") from None
        if ia == ib:
            continue
        us.append(ia)
        vs.append(ib)

    if us:
        u = np.concatenate([np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)])
        v = np.concatenate([np.array(vs, dtype=np.int64), np.array(us, dtype=np.int64)])
        keys = np.unique(u * n + v)
        u, v = keys // n, keys % n
    else:
        u = v = np.zeros(0, dtype=np.int64)

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, u + 1, 1)
    indptr = np.cumsum(indptr)
    return Graph(indptr=indptr, indices=v, features=features, ids=ids)


def graphs_equal(a: Graph, b: Graph) -> bool:
    return (
        a.ids == b.ids
        and np.array_equal(a.indptr, b.indptr)
        and np.array_equal(a.indices, b.indices)
        and np.array_equal(a.features, b.features)
    )


def cap_degrees(g: Graph, max_degree: int, rng: np.random.Generator) -> Graph:
    """Subsample each over-cap neighbor list down to ``max_degree`` entries.

    Lists at or below the cap are left untouched, so re-capping with any seed
    is the identity on an already-capped graph.  Each truncation is a uniform
    draw without replacement from the original list.
    """
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    if g.node_count == 0 or (g.degrees <= max_degree).all():
        return g
    rows = []
    for v in range(g.node_count):
        row = g.neighbors(v)
        if len(row) > max_degree:
            row = np.sort(rng.permutation(row)[:max_degree])
        rows.append(row)
    indptr = np.zeros(g.node_count + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return Graph(indptr=indptr, indices=indices.astype(np.int64), features=g.features, ids=g.ids)


class ClusteringCoefficient(NamedTuple):
    value: float
    defined: bool


def clustering_coefficient(g: Graph, v: int) -> ClusteringCoefficient:
    """Fraction of closed triangles among pairs of v's neighbors.

    Nodes of degree < 2 have no neighbor pairs; the quotient is undefined
    there, so we return 0 with ``defined=False`` to keep downstream
    regression targets total.
    """
    neigh = g.neighbors(v)
    d = len(neigh)
    if d < 2:
        return ClusteringCoefficient(0.0, False)
    closed = 0
    for u in neigh:
        closed += len(np.intersect1d(g.neighbors(u), neigh, assume_unique=True))
    # each neighbor-neighbor edge was counted from both endpoints
    return ClusteringCoefficient(closed / (d * (d - 1)), True)


class WLRefinement(NamedTuple):
    labels: tuple
    histogram: Counter


def wl_refine(g: Graph, init_labels: Sequence, iters: int) -> WLRefinement:
    """Iterative vertex refinement by neighbor-label multisets.

    Each round replaces a node's label with the canonical rank of the pair
    (own label, sorted multiset of neighbor labels); ranks are assigned by
    sorting the distinct signatures, so isomorphic graphs under equal initial
    labels produce identical label multisets at every round.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    if len(init_labels) != g.node_count:
        raise DataError("one initial label per node required")
    labels = list(init_labels)
    for _ in range(iters):
        sigs = [
            (labels[v], tuple(sorted(labels[u] for u in g.neighbors(v))))
            for v in range(g.node_count)
        ]
        rank = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
        labels = [rank[sig] for sig in sigs]
    return WLRefinement(tuple(labels), Counter(labels))


def induced_subgraph(g: Graph, nodes: Sequence[int]) -> Graph:
    """Subgraph on ``nodes`` (internal indices), keeping their external ids.

    New internal indices follow the order of ``nodes``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(np.unique(nodes)) != len(nodes):
        raise DataError("duplicate nodes in subgraph selection")
    old_to_new = {int(old): new for new, old in enumerate(nodes)}
    rows = []
    for old in nodes:
        kept = [old_to_new[int(u)] for u in g.neighbors(int(old)) if int(u) in old_to_new]
        rows.append(np.sort(np.array(kept, dtype=np.int64)))
    indptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    return Graph(
        indptr=indptr,
        indices=indices.astype(np.int64),
        features=g.features[nodes],
        ids=tuple(g.ids[int(old)] for old in nodes),
    )


@dataclass(frozen=True)
class LabelSet:
    """Per-node targets: integer classes or binary indicator rows."""

    kind: str  # "single" | "multi"
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.kind == "single":
            if self.labels.ndim != 1:
                raise DataError("single-label targets must be a 1-D class array")
            if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
                raise DataError("class label out of range")
        elif self.kind == "multi":
            if self.labels.ndim != 2 or self.labels.shape[1] != self.n_classes:
                raise DataError("multi-label targets must be (n, n_classes) binary rows")
        else:
            raise DataError(f"unknown label kind: {self.kind!r}")

    def take(self, nodes) -> np.ndarray:
        return self.labels[np.asarray(nodes)]
