"""Stochastic set construction: neighbor draws, minibatch plans, walks, negatives.

A minibatch plan is a fixed-fanout expansion tree.  Level 0 holds the batch;
level j+1 holds, for every position at level j, its drawn neighbor block of
fixed width.  The block drawn for a position serves as that node's sampled
neighborhood at every depth of the later aggregation, so the total number of
drawn slots per batch item is exactly sum_k prod_{i>=k} S_i.  Draws at
different levels come from independent sub-streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError
from .graph import Graph


def sample_neighbors(g: Graph, v: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed-size uniform draw from v's neighbor list.

    Without replacement when the degree covers the request, with replacement
    when it does not, and ``size`` copies of v itself for isolated nodes so
    the operation is total.
    """
    if size < 0:
        raise ValueError("size must be >= 0")
    if size == 0:
        return np.zeros(0, dtype=np.int64)
    neigh = g.neighbors(v)
    if len(neigh) == 0:
        return np.full(size, v, dtype=np.int64)
    if len(neigh) >= size:
        return rng.choice(neigh, size=size, replace=False).astype(np.int64)
    return rng.choice(neigh, size=size, replace=True).astype(np.int64)


def _draw_groups(g: Graph, parents: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized per-parent neighbor draws, one row of ``size`` per parent.

    Parents with degree >= size are bucketed by degree so the
    without-replacement draws stay vectorized.
    """
    m = len(parents)
    out = np.empty((m, size), dtype=np.int64)
    degs = g.degrees[parents]

    isolated = degs == 0
    if isolated.any():
        out[isolated] = np.repeat(parents[isolated][:, None], size, axis=1)

    deficit = (degs > 0) & (degs < size)
    if deficit.any():
        rows = np.nonzero(deficit)[0]
        d = degs[rows]
        slots = np.floor(rng.random((len(rows), size)) * d[:, None]).astype(np.int64)
        starts = g.indptr[parents[rows]]
        out[rows] = g.indices[starts[:, None] + slots]

    for deg in np.unique(degs[degs >= size]):
        rows = np.nonzero(degs == deg)[0]
        keys = rng.random((len(rows), deg))
        take = np.argpartition(keys, size - 1, axis=1)[:, :size] if size < deg else \
            np.argsort(keys, axis=1)
        starts = g.indptr[parents[rows]]
        out[rows] = g.indices[starts[:, None] + take[:, :size]]
    return out


@dataclass
class MinibatchPlan:
    """Sampled expansion tree for one batch.

    ``levels[j]`` flattens level j of the tree; children of position i at
    level j sit at ``levels[j+1][i*fanouts[j]:(i+1)*fanouts[j]]``.  The
    ``isolated`` masks flag positions whose draw is the degree-0 self-repeat
    fallback, which downstream aggregation treats as an empty neighborhood.
    """

    sizes: tuple[int, ...]
    levels: list[np.ndarray]
    fanouts: tuple[int, ...]
    isolated: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.sizes)

    @property
    def batch(self) -> np.ndarray:
        return self.levels[0]

    @cached_property
    def total_sampled_slots(self) -> int:
        return sum(len(self.levels[j]) * self.fanouts[j] for j in range(self.depth))

    @property
    def slots_per_batch_item(self) -> int:
        return self.total_sampled_slots // len(self.batch)

    def frontier(self, k: int) -> np.ndarray:
        """Distinct nodes needed to compute depth-k representations of the batch."""
        if not 0 <= k <= self.depth:
            raise ValueError(f"frontier index {k} outside 0..{self.depth}")
        return np.unique(np.concatenate(self.levels[: self.depth - k + 1]))

    def children(self, level: int, position: int) -> np.ndarray:
        fan = self.fanouts[level]
        return self.levels[level + 1][position * fan:(position + 1) * fan]


def build_minibatch_plan(g: Graph, batch, sizes, rng: np.random.Generator) -> MinibatchPlan:
    """Expand a batch into its sampled computation tree.

    Hop-k nodes (distance k from the batch) are drawn with size S_{K-k+1},
    i.e. the deepest hop uses S_1.  Each level is drawn from its own
    sub-stream so replays with the same seed are identical.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 1 or any(s < 1 for s in sizes):
        raise ValueError("need at least one sample size, all >= 1")
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise DataError("empty batch")
    if batch.min() < 0 or batch.max() >= g.node_count:
        raise DataError("batch contains unknown node indices")

    depth = len(sizes)
    fanouts = tuple(sizes[depth - 1 - j] for j in range(depth))
    streams = rng.spawn(depth)

    levels = [batch]
    isolated = []
    for j in range(depth):
        parents = levels[j]
        isolated.append(g.degrees[parents] == 0)
        levels.append(_draw_groups(g, parents, fanouts[j], streams[j]).reshape(-1))
    return MinibatchPlan(sizes=sizes, levels=levels, fanouts=fanouts, isolated=isolated)


@dataclass(frozen=True)
class WalkPairs:
    """Ordered co-occurrence pairs harvested from random walks."""

    pairs: np.ndarray  # (m, 2) int64

    def __len__(self):
        return len(self.pairs)

    @property
    def left(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def right(self) -> np.ndarray:
        return self.pairs[:, 1]


def random_walks(g: Graph, starts: np.ndarray, walk_len: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random walks of ``walk_len`` steps; rows visit walk_len+1 nodes.

    Callers must not pass isolated start nodes.
    """
    m = len(starts)
    visits = np.empty((m, walk_len + 1), dtype=np.int64)
    visits[:, 0] = starts
    degs = g.degrees
    for t in range(walk_len):
        cur = visits[:, t]
        slot = np.floor(rng.random(m) * degs[cur]).astype(np.int64)
        visits[:, t + 1] = g.indices[g.indptr[cur] + slot]
    return visits


def generate_walks(g: Graph, walks_per_node: int, walk_len: int,
                   window: int | None, rng: np.random.Generator,
                   sources: np.ndarray | None = None) -> WalkPairs:
    """Emit all ordered within-window pairs from per-node uniform walks.

    ``window=None`` uses the full walk as context.  Pairs with identical
    endpoints are dropped; isolated nodes start no walks.  ``sources``
    restricts which nodes start walks (all positive-degree nodes otherwise).
    """
    if walk_len < 1:
        raise ValueError("walk_len must be >= 1")
    if window is None:
        window = walk_len
    if sources is None:
        sources = np.arange(g.node_count)
    sources = np.asarray(sources, dtype=np.int64)
    sources = sources[g.degrees[sources] > 0]
    if len(sources) == 0 or walks_per_node == 0:
        return WalkPairs(np.zeros((0, 2), dtype=np.int64))
    starts = np.repeat(sources, walks_per_node)
    visits = random_walks(g, starts, walk_len, rng)

    chunks = []
    for offset in range(1, min(window, walk_len) + 1):
        a = visits[:, :-offset].reshape(-1)
        b = visits[:, offset:].reshape(-1)
        keep = a != b
        chunks.append(np.stack([a[keep], b[keep]], axis=1))
        chunks.append(np.stack([b[keep], a[keep]], axis=1))
    return WalkPairs(np.concatenate(chunks, axis=0))


@dataclass(frozen=True)
class NegativeDistribution:
    """Node distribution with probability proportional to degree**alpha."""

    weights: np.ndarray
    cumulative: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.cumulative[-1]


def negative_distribution(g: Graph, alpha: float) -> NegativeDistribution:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    weights = np.zeros(g.node_count, dtype=np.float64)
    pos = g.degrees > 0
    weights[pos] = g.degrees[pos].astype(np.float64) ** alpha
    if weights.sum() <= 0:
        raise DataError("negative distribution needs at least one node with positive degree")
    return NegativeDistribution(weights=weights, cumulative=np.cumsum(weights))


def draw_negatives(dist: NegativeDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. draws with replacement from the smoothed degree distribution."""
    total = dist.cumulative[-1]
    r = rng.random(count) * total
    return np.searchsorted(dist.cumulative, r, side="right").astype(np.int64)
