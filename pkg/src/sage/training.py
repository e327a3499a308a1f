"""Optimization loops for both objectives.

Runs are deterministic for a fixed seed: every stochastic choice (init,
data order, plans, negatives, neighbor orders) draws from sub-streams
spawned off the run seed, and multi-threaded gradient shards are reduced in
shard order, so rerunning an identical configuration is bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .errors import DataError, NumericalError
from .graph import Graph, LabelSet
from .model import (ModelConfig, ModelParams, apply_head, embed_nodes, forward_minibatch,
                    init_params, negative_sampling_loss, supervised_loss)
from .sampling import (WalkPairs, build_minibatch_plan, draw_negatives, generate_walks,
                       negative_distribution)

SUP_LEARNING_RATES = (1e-2, 1e-3, 1e-4)
UNSUP_LEARNING_RATES = (2e-6, 2e-7, 2e-8)


@dataclass
class TrainConfig:
    mode: str = "sup"
    learning_rate: float | None = None  # defaults to the middle of the sweep per mode
    batch_size: int = 512
    epochs: int | None = None  # 10 supervised, 1 pass over walk pairs unsupervised
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    threads: int = 1
    walks_per_node: int = 50
    walk_length: int = 5
    window: int | None = None
    val_fraction: float = 0.0  # unsupervised held-out pair share
    max_steps: int | None = None

    def __post_init__(self):
        if self.mode not in ("sup", "unsup"):
            raise DataError("mode must be 'sup' or 'unsup'")
        if self.learning_rate is None:
            self.learning_rate = SUP_LEARNING_RATES[1] if self.mode == "sup" else UNSUP_LEARNING_RATES[1]
        if self.epochs is None:
            self.epochs = 10 if self.mode == "sup" else 1
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1 or self.threads < 1:
            raise DataError("rates and sizes must be positive")


class AdamState:
    """First/second moment tensors mirroring the parameter arrays."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0


def adam_step(arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam update, applied in place."""
    state.t += 1
    b1t = 1.0 - beta1 ** state.t
    b2t = 1.0 - beta2 ** state.t
    for name, param in arrays.items():
        g = grads[name]
        if g.shape != param.shape:
            raise DataError(f"gradient shape mismatch for {name}")
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name!r} at step {state.t}")
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        param -= lr * (m / b1t) / (np.sqrt(v / b2t) + eps)


class HistoryRow(NamedTuple):
    step: int
    loss: float
    val_loss: float


@dataclass
class TrainResult:
    params: ModelParams
    history: list[HistoryRow]
    epoch_losses: list[float]

    @property
    def final_loss(self) -> float:
        return self.history[-1].loss if self.history else math.nan


def _accumulate_shards(jobs, threads: int):
    """Run shard jobs and reduce (loss, grads, weight) in shard order."""
    if threads <= 1 or len(jobs) <= 1:
        results = [job() for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: job(), jobs))
    total_weight = sum(w for _, _, w in results)
    loss = 0.0
    grads: dict[str, np.ndarray] = {}
    for shard_loss, shard_grads, weight in results:
        scale = weight / total_weight
        loss += shard_loss * scale
        for name, g in shard_grads.items():
            if name in grads:
                grads[name] += g * scale
            else:
                grads[name] = g * scale
    return loss, grads


def _shards(items: np.ndarray, threads: int) -> list[np.ndarray]:
    if threads <= 1 or len(items) <= threads:
        return [items]
    return [part for part in np.array_split(items, threads) if len(part)]


def _grads_by_name(tape: Tape, loss, bound) -> dict[str, np.ndarray]:
    table = tape.backward(loss)
    return {name: table[t.idx] for name, t in bound.items()}


def train_supervised(g: Graph, train_nodes, labels: LabelSet, model_cfg: ModelConfig,
                     train_cfg: TrainConfig,
                     val: tuple[Graph, np.ndarray, LabelSet] | None = None) -> TrainResult:
    """Minibatch cross-entropy training over labeled nodes of ``g``.

    Validation embeds held-out nodes in inference mode and scores them
    without touching parameters.
    """
    model_cfg.validate()
    train_nodes = np.asarray(train_nodes, dtype=np.int64)
    if train_nodes.size == 0:
        raise DataError("no training nodes")
    head_kind = "classifier" if labels.kind == "single" else "multilabel"

    root = np.random.default_rng(train_cfg.seed)
    init_rng, order_rng, plan_rng, lstm_rng = root.spawn(4)
    params = init_params(model_cfg, g.feature_dim, init_rng,
                         head_kind=head_kind, n_outputs=labels.n_classes)
    state = AdamState(params.arrays)

    history: list[HistoryRow] = []
    epoch_losses: list[float] = []
    step = 0
    done = False
    for _ in range(train_cfg.epochs):
        order = order_rng.permutation(train_nodes)
        batch_losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch = order[start:start + train_cfg.batch_size]
            shard_lists = _shards(batch, train_cfg.threads)
            shard_rngs = plan_rng.spawn(len(shard_lists))

            jobs = []
            for shard, shard_rng in zip(shard_lists, shard_rngs):
                def job(shard=shard, shard_rng=shard_rng):
                    tape = Tape(dtype=np.float32)
                    plan = build_minibatch_plan(g, shard, model_cfg.sample_sizes, shard_rng)
                    bound = params.bind(tape)
                    z = forward_minibatch(g, plan, params, tape, mode="train", rng=shard_rng,
                                          bound=bound)
                    logits = apply_head(z, bound)
                    loss = supervised_loss(tape, logits, labels.take(shard), labels.kind)
                    return float(loss.data[0, 0]), _grads_by_name(tape, loss, bound), len(shard)
                jobs.append(job)

            loss, grads = _accumulate_shards(jobs, train_cfg.threads)
            if not math.isfinite(loss):
                raise NumericalError(f"training loss diverged (non-finite) at step {step}")
            adam_step(params.arrays, grads, state, train_cfg.learning_rate,
                      train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
            batch_losses.append(loss)
            history.append(HistoryRow(step, loss, math.nan))
            step += 1
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
        if batch_losses:
            epoch_losses.append(float(np.mean(batch_losses)))
        if val is not None and history:
            val_loss = validation_loss(params, *val)
            history[-1] = history[-1]._replace(val_loss=val_loss)
        if done:
            break
    return TrainResult(params=params, history=history, epoch_losses=epoch_losses)


def validation_loss(params: ModelParams, val_graph: Graph, val_nodes, val_labels: LabelSet,
                    seed: int = 0) -> float:
    """Inference-mode loss on held-out nodes; performs no updates."""
    val_nodes = np.asarray(val_nodes, dtype=np.int64)
    emb = embed_nodes(val_graph, val_nodes, params, seed=seed)
    tape = Tape(dtype=np.float32)
    logits = tape.constant(emb.vectors @ params.arrays["head.weight"] + params.arrays["head.bias"])
    loss = supervised_loss(tape, logits, val_labels.take(val_nodes), val_labels.kind)
    return float(loss.data[0, 0])


def train_unsupervised(g: Graph, model_cfg: ModelConfig, train_cfg: TrainConfig,
                       pairs: WalkPairs | None = None) -> TrainResult:
    """Walk-pair contrastive training; one epoch is a pass over the pairs."""
    model_cfg.validate()
    root = np.random.default_rng(train_cfg.seed)
    init_rng, walk_rng, order_rng, plan_rng, neg_rng = root.spawn(5)
    if pairs is None:
        pairs = generate_walks(g, train_cfg.walks_per_node, train_cfg.walk_length,
                               train_cfg.window, walk_rng)
    if len(pairs) == 0:
        raise DataError("no walk pairs: the graph has no edges")
    dist = negative_distribution(g, model_cfg.smoothing)
    params = init_params(model_cfg, g.feature_dim, init_rng)
    state = AdamState(params.arrays)
    q = model_cfg.negatives

    all_pairs = pairs.pairs
    n_val = int(len(all_pairs) * train_cfg.val_fraction)
    perm = order_rng.permutation(len(all_pairs))
    val_pairs = all_pairs[perm[:n_val]]
    train_pairs = all_pairs[perm[n_val:]]
    if len(train_pairs) == 0:
        raise DataError("validation fraction left no training pairs")

    val_negs = draw_negatives(dist, len(val_pairs) * q, neg_rng) if n_val else None

    history: list[HistoryRow] = []
    epoch_losses: list[float] = []
    step = 0
    done = False
    for _ in range(train_cfg.epochs):
        order = order_rng.permutation(len(train_pairs))
        batch_losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch = train_pairs[order[start:start + train_cfg.batch_size]]
            negs = draw_negatives(dist, len(batch) * q, neg_rng)
            shard_slices = _shards(np.arange(len(batch)), train_cfg.threads)
            shard_rngs = plan_rng.spawn(len(shard_slices))

            jobs = []
            for rows, shard_rng in zip(shard_slices, shard_rngs):
                def job(rows=rows, shard_rng=shard_rng):
                    u = batch[rows, 0]
                    v = batch[rows, 1]
                    nn = negs.reshape(len(batch), q)[rows].reshape(-1)
                    uniq = np.unique(np.concatenate([u, v, nn]))
                    tape = Tape(dtype=np.float32)
                    plan = build_minibatch_plan(g, uniq, model_cfg.sample_sizes, shard_rng)
                    bound = params.bind(tape)
                    z = forward_minibatch(g, plan, params, tape, mode="train", rng=shard_rng,
                                          bound=bound)
                    z_u = ad.gather_rows(z, np.searchsorted(uniq, u))
                    z_v = ad.gather_rows(z, np.searchsorted(uniq, v))
                    z_n = ad.gather_rows(z, np.searchsorted(uniq, nn))
                    loss = negative_sampling_loss(tape, z_u, z_v, z_n, q)
                    return float(loss.data[0, 0]), _grads_by_name(tape, loss, bound), len(rows)
                jobs.append(job)

            loss, grads = _accumulate_shards(jobs, train_cfg.threads)
            if not math.isfinite(loss):
                raise NumericalError(f"training loss diverged (non-finite) at step {step}")
            adam_step(params.arrays, grads, state, train_cfg.learning_rate,
                      train_cfg.beta1, train_cfg.beta2, train_cfg.eps)
            batch_losses.append(loss)
            history.append(HistoryRow(step, loss, math.nan))
            step += 1
            if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                done = True
                break
        if batch_losses:
            epoch_losses.append(float(np.mean(batch_losses)))
        if n_val and history:
            val_loss = unsupervised_validation_loss(g, params, val_pairs, val_negs, q)
            history[-1] = history[-1]._replace(val_loss=val_loss)
        if done:
            break
    return TrainResult(params=params, history=history, epoch_losses=epoch_losses)


def unsupervised_validation_loss(g: Graph, params: ModelParams, val_pairs: np.ndarray,
                                 val_negs: np.ndarray, q: int, seed: int = 0) -> float:
    uniq = np.unique(np.concatenate([val_pairs.reshape(-1), val_negs]))
    emb = embed_nodes(g, uniq, params, seed=seed)
    tape = Tape(dtype=np.float32)
    z = tape.constant(emb.vectors)
    z_u = ad.gather_rows(z, np.searchsorted(uniq, val_pairs[:, 0]))
    z_v = ad.gather_rows(z, np.searchsorted(uniq, val_pairs[:, 1]))
    z_n = ad.gather_rows(z, np.searchsorted(uniq, val_negs))
    loss = negative_sampling_loss(tape, z_u, z_v, z_n, q)
    return float(loss.data[0, 0])
