"""Embedding generation and training objectives.

``forward_full`` runs the per-depth aggregate/transform/normalize loop over
entire neighborhoods; ``forward_minibatch`` runs the identical recursion
restricted to the sampled expansion tree of a plan.  Inference never touches
parameters, which is what makes embedding unseen nodes a pure function of
the trained model.

Sampled neighbor blocks are deduplicated (first occurrence, then sorted by
node id) before aggregation.  Draws that fit inside a node's degree contain
no duplicates, so this only affects with-replacement deficit draws, where it
makes the aggregate equal the exact full-neighborhood value whenever the
draw covers the whole neighborhood.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .aggregators import VARIANTS, apply_layer, build_neighbor_groups
from .autodiff import Tape, Tensor
from .errors import DataError
from .graph import Graph
from .sampling import MinibatchPlan, build_minibatch_plan

HEAD_KINDS = ("classifier", "multilabel", "regression")


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 2
    sample_sizes: tuple[int, ...] = (25, 10)
    hidden_dims: tuple[int, ...] = (256, 256)
    aggregator: str = "mean"
    pool_dim: int = 512
    lstm_dim: int = 128
    negatives: int = 20
    smoothing: float = 0.75
    normalize_output: bool = True
    activation: str = "relu"

    def validate(self) -> "ModelConfig":
        if self.depth < 1:
            raise DataError("depth must be >= 1")
        if len(self.sample_sizes) != self.depth or any(s < 1 for s in self.sample_sizes):
            raise DataError("need one sample size >= 1 per depth")
        if len(self.hidden_dims) != self.depth or any(d < 1 for d in self.hidden_dims):
            raise DataError("need one hidden dim >= 1 per depth")
        if self.aggregator not in VARIANTS:
            raise DataError(f"aggregator must be one of {VARIANTS}")
        if self.negatives < 1 or self.smoothing < 0:
            raise DataError("negatives must be >= 1 and smoothing >= 0")
        return self

    @staticmethod
    def create(depth=2, sample_sizes=(25, 10), hidden_dims=256, **kwargs) -> "ModelConfig":
        if isinstance(hidden_dims, int):
            hidden_dims = (hidden_dims,) * depth
        return ModelConfig(depth=depth, sample_sizes=tuple(sample_sizes),
                           hidden_dims=tuple(hidden_dims), **kwargs)


@dataclass
class Embeddings:
    nodes: np.ndarray
    vectors: np.ndarray


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(np.float32)


def _layer_param_shapes(cfg: ModelConfig, feature_dim: int) -> list[tuple[str, tuple[int, int]]]:
    shapes = []
    d_in = feature_dim
    for k in range(1, cfg.depth + 1):
        d_out = cfg.hidden_dims[k - 1]
        prefix = f"layer{k}."
        if cfg.aggregator == "mean":
            shapes.append((prefix + "weight", (2 * d_in, d_out)))
        elif cfg.aggregator == "gcn":
            shapes.append((prefix + "weight", (d_in, d_out)))
        elif cfg.aggregator == "pool":
            shapes.append((prefix + "pool_weight", (d_in, cfg.pool_dim)))
            shapes.append((prefix + "pool_bias", (1, cfg.pool_dim)))
            shapes.append((prefix + "weight", (d_in + cfg.pool_dim, d_out)))
        else:  # lstm
            for gate in "ifoc":
                shapes.append((prefix + f"lstm_wx_{gate}", (d_in, cfg.lstm_dim)))
                shapes.append((prefix + f"lstm_wh_{gate}", (cfg.lstm_dim, cfg.lstm_dim)))
                shapes.append((prefix + f"lstm_b_{gate}", (1, cfg.lstm_dim)))
            shapes.append((prefix + "weight", (d_in + cfg.lstm_dim, d_out)))
        d_in = d_out
    return shapes


class ModelParams:
    """Named parameter arrays in declaration order, plus the configuration.

    Forward passes treat instances as read-only; only the optimizer writes
    into the arrays, between forwards.
    """

    def __init__(self, config: ModelConfig, feature_dim: int, arrays: dict[str, np.ndarray],
                 head_kind: str | None = None, n_outputs: int | None = None):
        self.config = config
        self.feature_dim = feature_dim
        self.arrays = arrays
        self.head_kind = head_kind
        self.n_outputs = n_outputs

    @property
    def output_dim(self) -> int:
        return self.config.hidden_dims[-1] if self.config.depth >= 1 else self.feature_dim

    def layer(self, k: int) -> dict[str, np.ndarray]:
        prefix = f"layer{k}."
        return {name[len(prefix):]: arr for name, arr in self.arrays.items()
                if name.startswith(prefix)}

    def bind(self, tape: Tape, include_head: bool = True) -> dict[str, Tensor]:
        return {name: tape.param(arr) for name, arr in self.arrays.items()
                if include_head or not name.startswith("head.")}

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name, arr in self.arrays.items():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()

    def clone(self) -> "ModelParams":
        return ModelParams(self.config, self.feature_dim,
                           {k: v.copy() for k, v in self.arrays.items()},
                           self.head_kind, self.n_outputs)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, self.feature_dim,
                           {k: v.astype(dtype) for k, v in self.arrays.items()},
                           self.head_kind, self.n_outputs)


def init_params(cfg: ModelConfig, feature_dim: int, rng: np.random.Generator,
                head_kind: str | None = None, n_outputs: int | None = None) -> ModelParams:
    """Symmetric uniform init in +-sqrt(6/(fan_in+fan_out)); biases start at zero."""
    if head_kind is not None:
        if head_kind not in HEAD_KINDS:
            raise DataError(f"head kind must be one of {HEAD_KINDS}")
        if not n_outputs or n_outputs < 1:
            raise DataError("a head needs n_outputs >= 1")
    arrays: dict[str, np.ndarray] = {}
    for name, (rows, cols) in _layer_param_shapes(cfg, feature_dim):
        if name.endswith(("bias", "_b_i", "_b_f", "_b_o", "_b_c")):
            arrays[name] = np.zeros((rows, cols), dtype=np.float32)
        else:
            arrays[name] = _glorot(rng, rows, cols)
    out_dim = cfg.hidden_dims[-1] if cfg.depth >= 1 else feature_dim
    if head_kind is not None:
        arrays["head.weight"] = _glorot(rng, out_dim, n_outputs)
        arrays["head.bias"] = np.zeros((1, n_outputs), dtype=np.float32)
    return ModelParams(cfg, feature_dim, arrays, head_kind, n_outputs)


# -- forward propagation ---------------------------------------------------

def _bound_layer(bound: dict[str, Tensor], k: int) -> dict[str, Tensor]:
    prefix = f"layer{k}."
    return {name[len(prefix):]: t for name, t in bound.items() if name.startswith(prefix)}


@lru_cache(maxsize=65536)
def _inference_order(seed: int, depth: int, node_id: int, count: int) -> np.ndarray:
    rng = np.random.default_rng([0x5A6E, seed, depth, int(node_id)])
    return rng.permutation(count)


def _lstm_orders(groups, parent_ids: np.ndarray, depth: int, mode: str,
                 rng: np.random.Generator | None, infer_seed: int) -> list[np.ndarray]:
    orders = []
    for bucket in groups.buckets:
        m, c = bucket.child_rows.shape
        if mode == "train":
            if rng is None:
                raise ValueError("training-mode lstm needs an rng for fresh neighbor orders")
            orders.append(np.argsort(rng.random((m, c)), axis=1))
        else:
            rows = np.stack([_inference_order(infer_seed, depth, parent_ids[p], c)
                             for p in bucket.parent_rows])
            orders.append(rows)
    return orders


def _full_graph_groups(g: Graph):
    rows = [np.sort(g.neighbors(v)) for v in range(g.node_count)]
    rows = [r if len(r) else np.zeros(0, dtype=np.int64) for r in rows]
    return build_neighbor_groups(rows)


def forward_full(g: Graph, params: ModelParams, tape: Tape, *, mode: str = "infer",
                 rng: np.random.Generator | None = None, infer_seed: int = 0,
                 bound: dict[str, Tensor] | None = None) -> Tensor:
    """Whole-graph embedding generation: aggregate, transform, normalize per depth."""
    cfg = params.config
    if g.feature_dim != params.feature_dim:
        raise DataError(f"graph features have dim {g.feature_dim}, model expects {params.feature_dim}")
    h = tape.constant(g.features)
    if cfg.depth == 0:
        return h
    if bound is None:
        bound = params.bind(tape, include_head=False)
    groups = _full_graph_groups(g)
    all_ids = np.arange(g.node_count)
    for k in range(1, cfg.depth + 1):
        orders = None
        if cfg.aggregator == "lstm":
            orders = _lstm_orders(groups, all_ids, k, mode, rng, infer_seed)
        h = apply_layer(cfg.aggregator, _bound_layer(bound, k), h, h, groups, tape,
                        activation=cfg.activation, lstm_orders=orders)
        if cfg.normalize_output:
            h = ad.l2_normalize_rows(h)
    return h


def _plan_level_groups(plan: MinibatchPlan):
    """Dedup and sort each drawn block; isolated parents become empty groups."""
    per_level = []
    for j in range(plan.depth):
        fan = plan.fanouts[j]
        child_ids = plan.levels[j + 1]
        rows = []
        for i in range(len(plan.levels[j])):
            if plan.isolated[j][i]:
                rows.append(np.zeros(0, dtype=np.int64))
                continue
            block = child_ids[i * fan:(i + 1) * fan]
            # first occurrence per distinct id, already ordered by ascending id
            _, first = np.unique(block, return_index=True)
            rows.append(i * fan + first)
        per_level.append(build_neighbor_groups(rows))
    return per_level


def forward_minibatch(g: Graph, plan: MinibatchPlan, params: ModelParams, tape: Tape, *,
                      mode: str = "infer", rng: np.random.Generator | None = None,
                      infer_seed: int = 0, bound: dict[str, Tensor] | None = None) -> Tensor:
    """Embedding generation restricted to a plan's expansion tree.

    Representations are computed per tree level; the batch representation at
    the final depth comes out at level 0.
    """
    cfg = params.config
    if plan.depth != cfg.depth or plan.sizes != tuple(cfg.sample_sizes):
        raise DataError("plan depth/sizes do not match the model configuration")
    if g.feature_dim != params.feature_dim:
        raise DataError(f"graph features have dim {g.feature_dim}, model expects {params.feature_dim}")
    for level in plan.levels:
        if len(level) and (level.min() < 0 or level.max() >= g.node_count):
            raise DataError("plan references nodes outside the graph")

    if bound is None:
        bound = params.bind(tape, include_head=False)
    groups = _plan_level_groups(plan)
    h = [tape.constant(g.features[level]) for level in plan.levels]
    for k in range(1, cfg.depth + 1):
        new_h = []
        for j in range(cfg.depth - k + 1):
            orders = None
            if cfg.aggregator == "lstm":
                orders = _lstm_orders(groups[j], plan.levels[j], k, mode, rng, infer_seed)
            out = apply_layer(cfg.aggregator, _bound_layer(bound, k), h[j], h[j + 1],
                              groups[j], tape, activation=cfg.activation, lstm_orders=orders)
            if cfg.normalize_output:
                out = ad.l2_normalize_rows(out)
            new_h.append(out)
        h = new_h
    return h[0]


def embed_full(g: Graph, params: ModelParams, *, infer_seed: int = 0,
               dtype=np.float32) -> Embeddings:
    tape = Tape(dtype=dtype)
    out = forward_full(g, params, tape, mode="infer", infer_seed=infer_seed)
    return Embeddings(nodes=np.arange(g.node_count), vectors=out.data.copy())


def embed_nodes(g: Graph, nodes, params: ModelParams, seed: int = 0, *,
                dtype=np.float32) -> Embeddings:
    """Inductive inference for a node list: sample a plan, run the forward pass.

    Takes immutable params and performs zero parameter updates by
    construction.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    rng = np.random.default_rng([0x91B7, seed])
    plan = build_minibatch_plan(g, nodes, params.config.sample_sizes, rng)
    tape = Tape(dtype=dtype)
    out = forward_minibatch(g, plan, params, tape, mode="infer", infer_seed=seed)
    return Embeddings(nodes=nodes, vectors=out.data.copy())


def apply_head(z: Tensor, bound: dict[str, Tensor]) -> Tensor:
    return ad.add(ad.matmul(z, bound["head.weight"]), bound["head.bias"])


def head_logits(z: np.ndarray, params: ModelParams) -> np.ndarray:
    return z @ params.arrays["head.weight"] + params.arrays["head.bias"]


# -- objectives -------------------------------------------------------------

def negative_sampling_loss(tape: Tape, z_u: Tensor, z_v: Tensor, z_neg: Tensor,
                           negatives: int) -> Tensor:
    """Contrastive walk objective, averaged over positive pairs.

    ``z_neg`` holds ``negatives`` rows per pair, grouped by pair.  The
    expectation over the noise distribution is realized as a sum over the
    drawn samples; log-sigmoid is computed in its overflow-free form.
    """
    n = z_u.shape[0]
    if z_v.shape != z_u.shape:
        raise ad.ShapeError("positive pair blocks must align")
    if z_neg.shape[0] != n * negatives:
        raise ad.ShapeError(f"expected {n * negatives} negative rows, got {z_neg.shape[0]}")
    pos = ad.sum_all(ad.logsigmoid(ad.rowwise_dot(z_u, z_v)))
    u_rep = ad.gather_rows(z_u, np.repeat(np.arange(n), negatives))
    neg = ad.sum_all(ad.logsigmoid(ad.neg(ad.rowwise_dot(u_rep, z_neg))))
    return ad.scale(ad.add(pos, neg), -1.0 / n)


def unsupervised_loss(tape: Tape, z_u: Tensor, z_v: Tensor, negatives: Sequence[Tensor] | Tensor,
                      q: int) -> Tensor:
    """Single-pair form: -log s(u.v) - sum_q log s(-u.n_q)."""
    if isinstance(negatives, Tensor):
        z_neg = negatives
    else:
        if len(negatives) != q:
            raise ad.ShapeError(f"expected {q} negatives, got {len(negatives)}")
        z_neg = ad.concat_rows(*negatives)
    return negative_sampling_loss(tape, z_u, z_v, z_neg, q)


def supervised_loss(tape: Tape, logits: Tensor, labels: np.ndarray, kind: str) -> Tensor:
    """Cross-entropy head loss: softmax for single-label, per-label sigmoid otherwise."""
    n = logits.shape[0]
    if kind == "single":
        losses = ad.softmax_cross_entropy(logits, labels)
        return ad.scale(ad.sum_all(losses), 1.0 / n)
    if kind == "multi":
        losses = ad.sigmoid_cross_entropy(logits, labels)
        return ad.scale(ad.sum_all(losses), 1.0 / n)
    raise DataError(f"unknown label kind: {kind!r}")


def regression_loss(tape: Tape, pred: Tensor, targets: np.ndarray) -> Tensor:
    diff = ad.add(pred, tape.constant(-np.asarray(targets, dtype=tape.dtype)))
    return ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / pred.shape[0])


def predict_single(logits: np.ndarray) -> np.ndarray:
    return np.argmax(logits, axis=1)


def predict_multi(logits: np.ndarray) -> np.ndarray:
    # sigmoid(x) > 0.5 is exactly x > 0
    return (logits > 0).astype(np.int8)


# -- discrete hash-aggregator mode ------------------------------------------

def _label_hash(own, neighbor_labels) -> int:
    payload = repr((own, tuple(sorted(neighbor_labels)))).encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def forward_hash(g: Graph, init_labels: Sequence | None = None,
                 iters: int | None = None) -> tuple[tuple, Counter]:
    """Run the forward recursion with an injective hash as the aggregator.

    With identity weights and no nonlinearity this is discrete vertex
    refinement: equal final label multisets are necessary for isomorphism.
    Degree labels seed the recursion when no initial labels are given.
    """
    labels = list(g.degrees) if init_labels is None else list(init_labels)
    if len(labels) != g.node_count:
        raise DataError("one initial label per node required")
    if iters is None:
        iters = g.node_count
    for _ in range(iters):
        labels = [
            _label_hash(labels[v], [labels[u] for u in g.neighbors(v)])
            for v in range(g.node_count)
        ]
    return tuple(labels), Counter(labels)
