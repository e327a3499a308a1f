"""Transductive lookup-embedding baseline and its invariance probes.

The baseline shares the aggregation model's contrastive walk objective, but
the pair representations come straight out of a trainable lookup table, so
embedding a new node requires a fresh round of gradient descent.  Vanilla
SGD with closed-form gradients keeps that round honest and fast.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .sampling import NegativeDistribution, WalkPairs, draw_negatives


def _stable_log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LookupEmbeddings:
    """Directly optimized per-node vectors with a freeze mask."""

    vectors: np.ndarray
    trainable: np.ndarray  # bool per node

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def normalized(self) -> "LookupEmbeddings":
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        safe = np.where(norms == 0, 1.0, norms)
        return LookupEmbeddings(self.vectors / safe, self.trainable.copy())


def skipgram_pair_losses(z_u: np.ndarray, z_v: np.ndarray, z_neg: np.ndarray) -> np.ndarray:
    """Per-pair contrastive loss; ``z_neg`` is (pairs, Q, dim)."""
    pos = np.einsum("ij,ij->i", z_u, z_v)
    neg = np.einsum("ij,iqj->iq", z_u, z_neg)
    return -_stable_log_sigmoid(pos) - _stable_log_sigmoid(-neg).sum(axis=1)


def skipgram_objective(vectors: np.ndarray, pairs: np.ndarray, negatives: np.ndarray) -> float:
    """Mean pair loss of a lookup table under fixed pair/negative draws."""
    if len(pairs) == 0:
        raise DataError("no pairs to evaluate")
    z_u = vectors[pairs[:, 0]]
    z_v = vectors[pairs[:, 1]]
    z_neg = vectors[negatives]
    return float(skipgram_pair_losses(z_u, z_v, z_neg).mean())


def _sgd_epoch(vectors: np.ndarray, trainable: np.ndarray, pairs: np.ndarray,
               dist: NegativeDistribution, q: int, lr: float, batch_size: int,
               rng: np.random.Generator) -> tuple[float, int]:
    """One vanilla-SGD pass; only rows flagged trainable are updated."""
    order = rng.permutation(len(pairs))
    total = 0.0
    updates = 0
    for start in range(0, len(order), batch_size):
        batch = pairs[order[start:start + batch_size]]
        m = len(batch)
        negs = draw_negatives(dist, m * q, rng).reshape(m, q)
        u, v = batch[:, 0], batch[:, 1]
        z_u, z_v, z_n = vectors[u], vectors[v], vectors[negs]

        pos = np.einsum("ij,ij->i", z_u, z_v)
        neg = np.einsum("ij,iqj->iq", z_u, z_n)
        total += float((-_stable_log_sigmoid(pos) - _stable_log_sigmoid(-neg).sum(axis=1)).sum())

        # d/dz of the mean batch loss, with sigmoid terms in closed form
        coeff_pos = -_stable_sigmoid(-pos)[:, None] / m
        coeff_neg = _stable_sigmoid(neg)[..., None] / m
        g_u = coeff_pos * z_v + np.einsum("iqj->ij", coeff_neg * z_n)
        g_v = coeff_pos * z_u
        g_n = coeff_neg * z_u[:, None, :]

        np.subtract.at(vectors, u[trainable[u]], lr * g_u[trainable[u]])
        np.subtract.at(vectors, v[trainable[v]], lr * g_v[trainable[v]])
        flat_negs = negs.reshape(-1)
        keep = trainable[flat_negs]
        np.subtract.at(vectors, flat_negs[keep], lr * g_n.reshape(-1, vectors.shape[1])[keep])
        updates += 1
        if not np.isfinite(vectors).all():
            raise NumericalError(f"lookup embeddings diverged in update {updates}")
    return total / len(pairs), updates


def train_skipgram(pairs: WalkPairs, n_nodes: int, dist: NegativeDistribution, *,
                   q: int = 20, dim: int = 128, learning_rate: float = 0.4,
                   passes: int = 5, batch_size: int = 64,
                   rng: np.random.Generator) -> tuple[LookupEmbeddings, list[float]]:
    """Optimize lookup vectors with vanilla SGD; rows come out unit-normalized."""
    if len(pairs) == 0:
        raise DataError("cannot train on an empty pair set")
    vectors = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_nodes, dim))
    trainable = np.ones(n_nodes, dtype=bool)
    losses = []
    for _ in range(passes):
        loss, _ = _sgd_epoch(vectors, trainable, pairs.pairs, dist, q,
                             learning_rate, batch_size, rng)
        losses.append(loss)
    return LookupEmbeddings(vectors, trainable).normalized(), losses


ONLINE_MODES = ("restricted", "unrestricted")


def online_embed_new_nodes(emb: LookupEmbeddings, new_nodes, pairs: WalkPairs,
                           dist: NegativeDistribution, *, mode: str = "restricted",
                           q: int = 20, learning_rate: float = 0.4, passes: int = 5,
                           batch_size: int = 64,
                           rng: np.random.Generator) -> tuple[LookupEmbeddings, dict]:
    """Embed new nodes by a fresh SGD round while old rows stay frozen.

    ``restricted`` keeps only pairs whose context endpoint is an already
    trained node, which counters drift; ``unrestricted`` keeps every pair
    touching a new node.  Wall-clock and update counts are reported for
    runtime comparisons against inductive inference.
    """
    if mode not in ONLINE_MODES:
        raise DataError(f"mode must be one of {ONLINE_MODES}")
    new_nodes = np.asarray(new_nodes, dtype=np.int64)
    vectors = emb.vectors.copy()
    trainable = np.zeros(len(vectors), dtype=bool)
    if len(new_nodes) == 0:
        return LookupEmbeddings(vectors, trainable), {"seconds": 0.0, "updates": 0, "pairs": 0}

    rng_init = rng.spawn(1)[0]
    vectors[new_nodes] = rng_init.uniform(-0.5 / emb.dim, 0.5 / emb.dim,
                                          size=(len(new_nodes), emb.dim))
    trainable[new_nodes] = True

    is_new = np.zeros(len(vectors), dtype=bool)
    is_new[new_nodes] = True
    touched = is_new[pairs.left] | is_new[pairs.right]
    if mode == "restricted":
        keep = touched & ~(is_new[pairs.left] & is_new[pairs.right])
    else:
        keep = touched
    kept = pairs.pairs[keep]

    start = time.perf_counter()
    updates = 0
    if len(kept):
        for _ in range(passes):
            _, batch_updates = _sgd_epoch(vectors, trainable, kept, dist, q,
                                          learning_rate, batch_size, rng)
            updates += batch_updates
    seconds = time.perf_counter() - start

    covered = np.unique(kept.reshape(-1)) if len(kept) else np.zeros(0, dtype=np.int64)
    missing = np.setdiff1d(new_nodes, covered)
    if len(missing):
        warnings.warn(f"{len(missing)} new node(s) had no usable pairs and keep their "
                      "random initialization", stacklevel=2)

    norms = np.linalg.norm(vectors[new_nodes], axis=1, keepdims=True)
    vectors[new_nodes] /= np.where(norms == 0, 1.0, norms)
    return LookupEmbeddings(vectors, trainable), {
        "seconds": seconds, "updates": updates, "pairs": int(len(kept)),
        "uncovered": missing,
    }


def random_orthogonal(dim: int, rng: np.random.Generator, tol: float = 1e-10) -> np.ndarray:
    """QR-orthonormalized Gaussian matrix, regenerated until within tolerance."""
    for _ in range(8):
        q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
        q = q * np.sign(np.diag(r))
        if np.abs(q @ q.T - np.eye(dim)).max() < tol:
            return q
    raise NumericalError("could not generate an orthogonal matrix within tolerance")


def rotation_invariance_check(emb: LookupEmbeddings, pairs: np.ndarray, negatives: np.ndarray,
                              rng: np.random.Generator, trials: int = 1) -> float:
    """Max |J(Z) - J(ZQ)| over random orthogonal Q: the objective only sees Z Z^T."""
    z = emb.vectors.astype(np.float64)
    base = skipgram_objective(z, pairs, negatives)
    worst = 0.0
    for _ in range(trials):
        q = random_orthogonal(z.shape[1], rng)
        worst = max(worst, abs(skipgram_objective(z @ q, pairs, negatives) - base))
    return worst
