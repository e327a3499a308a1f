"""The four neighborhood aggregation architectures.

Aggregation is expressed over gather groups: for a block of parent rows, the
neighbor representations live in a source tensor and each parent owns a list
of source-row indices.  Groups are bucketed by neighbor count so same-length
groups share slot tensors, which keeps everything expressible with the
elementwise set reductions of the tape.

Parents with an empty group (degree-0 fallback) contribute a zero
neighborhood vector; the convolutional variant degenerates to the node's own
representation there because its mean includes the node itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor

VARIANTS = ("mean", "gcn", "pool", "lstm")

_ACTIVATIONS = {
    "relu": ad.relu,
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "identity": lambda x: x,
}


def activation_fn(name: str):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation: {name!r}") from None


class Bucket(NamedTuple):
    parent_rows: np.ndarray  # (m,) rows of the parent block
    child_rows: np.ndarray   # (m, c) rows into the source tensor


@dataclass(frozen=True)
class NeighborGroups:
    """Static gather structure for one aggregation step."""

    n_parents: int
    buckets: tuple[Bucket, ...]
    empty_rows: np.ndarray
    restore: np.ndarray | None  # reorders assembled rows back to parent order


def build_neighbor_groups(rows_per_parent: Sequence[np.ndarray]) -> NeighborGroups:
    """Bucket per-parent source-row lists by length.

    Callers pass canonically ordered lists (sorted by node id, deduplicated),
    so equal neighbor multisets always gather in the same order.
    """
    by_size: dict[int, list[int]] = {}
    for i, rows in enumerate(rows_per_parent):
        by_size.setdefault(len(rows), []).append(i)

    buckets = []
    order_parts = []
    for size in sorted(k for k in by_size if k > 0):
        parents = np.array(by_size[size], dtype=np.int64)
        child = np.stack([np.asarray(rows_per_parent[i], dtype=np.int64) for i in parents])
        buckets.append(Bucket(parent_rows=parents, child_rows=child))
        order_parts.append(parents)
    empty_rows = np.array(by_size.get(0, []), dtype=np.int64)
    order_parts.append(empty_rows)

    order = np.concatenate(order_parts) if order_parts else np.zeros(0, dtype=np.int64)
    n = len(rows_per_parent)
    if np.array_equal(order, np.arange(n)):
        restore = None
    else:
        restore = np.empty(n, dtype=np.int64)
        restore[order] = np.arange(n)
    return NeighborGroups(n_parents=n, buckets=tuple(buckets), empty_rows=empty_rows,
                          restore=restore)


def _assemble(parts: list[Tensor], groups: NeighborGroups, tape: Tape, width: int) -> Tensor:
    if len(groups.empty_rows):
        parts = parts + [tape.constant(np.zeros((len(groups.empty_rows), width)))]
    block = parts[0] if len(parts) == 1 else ad.concat_rows(*parts)
    if groups.restore is None:
        return block
    return ad.gather_rows(block, groups.restore)


def _slot_tensors(source: Tensor, bucket: Bucket) -> list[Tensor]:
    return [ad.gather_rows(source, bucket.child_rows[:, t])
            for t in range(bucket.child_rows.shape[1])]


def _mean_neighborhood(h_source: Tensor, groups: NeighborGroups, tape: Tape) -> Tensor:
    width = h_source.shape[1]
    parts = [ad.mean_reduce(_slot_tensors(h_source, b)) for b in groups.buckets]
    return _assemble(parts, groups, tape, width)


def _gcn_neighborhood(h_self: Tensor, h_source: Tensor, groups: NeighborGroups,
                      tape: Tape) -> Tensor:
    width = h_source.shape[1]
    parts = [
        ad.mean_reduce(_slot_tensors(h_source, b) + [ad.gather_rows(h_self, b.parent_rows)])
        for b in groups.buckets
    ]
    if len(groups.empty_rows):
        parts = parts + [ad.gather_rows(h_self, groups.empty_rows)]
    block = parts[0] if len(parts) == 1 else ad.concat_rows(*parts)
    if groups.restore is None:
        return block
    return ad.gather_rows(block, groups.restore)


def _pool_neighborhood(h_source: Tensor, groups: NeighborGroups, layer, tape: Tape) -> Tensor:
    width = layer["pool_weight"].shape[1]
    if groups.buckets:
        pooled = ad.relu(ad.add(ad.matmul(h_source, layer["pool_weight"]), layer["pool_bias"]))
        parts = [ad.max_reduce(_slot_tensors(pooled, b)) for b in groups.buckets]
    else:
        parts = []
    return _assemble(parts, groups, tape, width)


def _lstm_cell_step(x: Tensor, h: Tensor, c: Tensor, layer) -> tuple[Tensor, Tensor]:
    def gate(name, fn):
        pre = ad.add(ad.add(ad.matmul(x, layer[f"lstm_wx_{name}"]),
                            ad.matmul(h, layer[f"lstm_wh_{name}"])),
                     layer[f"lstm_b_{name}"])
        return fn(pre)

    i = gate("i", ad.sigmoid)
    f = gate("f", ad.sigmoid)
    o = gate("o", ad.sigmoid)
    cand = gate("c", ad.tanh)
    c_new = ad.add(ad.mul(f, c), ad.mul(i, cand))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def _lstm_neighborhood(h_source: Tensor, groups: NeighborGroups, layer, tape: Tape,
                       orders: Sequence[np.ndarray]) -> Tensor:
    hid = layer["lstm_wh_i"].shape[0]
    parts = []
    for bucket, order in zip(groups.buckets, orders):
        m, c = bucket.child_rows.shape
        cols = bucket.child_rows[np.arange(m)[:, None], order]
        h = tape.constant(np.zeros((m, hid)))
        cell = tape.constant(np.zeros((m, hid)))
        for t in range(c):
            x = ad.gather_rows(h_source, cols[:, t])
            h, cell = _lstm_cell_step(x, h, cell, layer)
        parts.append(h)
    return _assemble(parts, groups, tape, hid)


def apply_layer(variant: str, layer, h_self: Tensor, h_source: Tensor,
                groups: NeighborGroups, tape: Tape, *, activation: str = "relu",
                lstm_orders: Sequence[np.ndarray] | None = None) -> Tensor:
    """One aggregation depth: neighborhood vector, optional concat, transform.

    ``layer`` maps parameter names to tape tensors for this depth.  The
    convolutional variant skips the concatenation; the other three
    concatenate ``[self ; neighborhood]`` before the dense transform.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown aggregator variant: {variant!r}")
    act = activation_fn(activation)
    if groups.n_parents != h_self.shape[0]:
        raise ValueError("group structure does not match the parent block")

    if variant == "gcn":
        nb = _gcn_neighborhood(h_self, h_source, groups, tape)
        return act(ad.matmul(nb, layer["weight"]))

    if variant == "mean":
        nb = _mean_neighborhood(h_source, groups, tape)
    elif variant == "pool":
        nb = _pool_neighborhood(h_source, groups, layer, tape)
    else:
        if lstm_orders is None:
            raise ValueError("lstm aggregation needs one neighbor order per bucket")
        nb = _lstm_neighborhood(h_source, groups, layer, tape, lstm_orders)
    return act(ad.matmul(ad.concat_cols(h_self, nb), layer["weight"]))


# -- single-node convenience surface -------------------------------------------

def _single_group(tape: Tape, h_self, neighbors):
    h_self_t = tape.lift(h_self)
    if isinstance(neighbors, Tensor):
        source = neighbors
    else:
        neigh = np.asarray(neighbors, dtype=tape.dtype)
        if neigh.ndim == 1:
            neigh = neigh.reshape(1, -1)
        if neigh.size == 0:
            neigh = neigh.reshape(0, h_self_t.shape[1])
        source = tape.constant(neigh)
    rows = [np.arange(source.shape[0], dtype=np.int64)]
    return h_self_t, source, build_neighbor_groups(rows)


def aggregate_mean_concat(h_self, neighbors, layer, tape: Tape, activation="relu") -> Tensor:
    h_self_t, source, groups = _single_group(tape, h_self, neighbors)
    return apply_layer("mean", layer, h_self_t, source, groups, tape, activation=activation)


def aggregate_gcn(h_self, neighbors, layer, tape: Tape, activation="relu") -> Tensor:
    h_self_t, source, groups = _single_group(tape, h_self, neighbors)
    return apply_layer("gcn", layer, h_self_t, source, groups, tape, activation=activation)


def aggregate_pool(h_self, neighbors, layer, tape: Tape, activation="relu") -> Tensor:
    h_self_t, source, groups = _single_group(tape, h_self, neighbors)
    return apply_layer("pool", layer, h_self_t, source, groups, tape, activation=activation)


def aggregate_lstm(h_self, neighbors, layer, tape: Tape, activation="relu", *,
                   order=None, rng=None) -> Tensor:
    """LSTM aggregation over an explicit or freshly drawn neighbor order."""
    h_self_t, source, groups = _single_group(tape, h_self, neighbors)
    count = source.shape[0]
    if order is None:
        if rng is None:
            raise ValueError("pass an explicit order or an rng to draw one")
        order = rng.permutation(count)
    orders = [np.asarray(order, dtype=np.int64).reshape(1, count)] if count else []
    return apply_layer("lstm", layer, h_self_t, source, groups, tape,
                       activation=activation, lstm_orders=orders)
