"""Synthetic benchmarks and structure probes.

Block-model generators stand in for the large licensed corpora the protocol
was designed around: intra-class edges are denser than inter-class ones, and
features are class means plus Gaussian noise whose scale controls how much
signal a features-only classifier can extract.  Everything is a pure
function of (spec, seed) and regenerates bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .graph import Graph, LabelSet, build_graph, clustering_coefficient, induced_subgraph
from .model import ModelConfig, ModelParams, embed_full
from .training import TrainConfig, TrainResult


@dataclass(frozen=True)
class SyntheticSpec:
    nodes: int = 1200
    classes: int = 4
    p_in: float = 0.06
    p_out: float = 0.005
    feature_dim: int = 16
    feature_noise: float = 1.0
    split: str = "evolving"  # "evolving" (node fractions) | "multigraph" (graph counts)
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    graph_counts: tuple[int, int, int] = (6, 2, 2)
    label_kind: str = "single"
    label_width: int | None = None  # multi-label width; defaults to `classes`
    seed: int = 0

    def validate(self) -> "SyntheticSpec":
        if not (0 <= self.p_out <= self.p_in <= 1):
            raise DataError("need 0 <= p_out <= p_in <= 1")
        if self.nodes < self.classes or self.classes < 1:
            raise DataError("need at least one node per class")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise DataError("split fractions must sum to 1")
        if self.label_kind not in ("single", "multi"):
            raise DataError("label_kind must be 'single' or 'multi'")
        return self


@dataclass
class InductiveDataset:
    graph: Graph
    labels: LabelSet
    train_nodes: np.ndarray
    val_nodes: np.ndarray
    test_nodes: np.ndarray
    spec: SyntheticSpec

    def training_view(self) -> tuple[Graph, LabelSet]:
        """Induced subgraph on the training nodes; held-out nodes never leak in."""
        sub = induced_subgraph(self.graph, self.train_nodes)
        labels = self.labels.labels[self.train_nodes]
        return sub, LabelSet(self.labels.kind, labels, self.labels.n_classes)


def _sbm_edges(classes: np.ndarray, p_in: float, p_out: float,
               rng: np.random.Generator) -> list[tuple[int, int]]:
    n = len(classes)
    edges = []
    # upper-triangle Bernoulli draws, blocked by class pair
    members = [np.nonzero(classes == c)[0] for c in range(classes.max() + 1)]
    for a in range(len(members)):
        for b in range(a, len(members)):
            p = p_in if a == b else p_out
            if p <= 0:
                continue
            rows, cols = members[a], members[b]
            mask = rng.random((len(rows), len(cols))) < p
            if a == b:
                mask = np.triu(mask, k=1)
            for i, j in zip(*np.nonzero(mask)):
                edges.append((int(rows[i]), int(cols[j])))
    return edges


def _class_means(classes: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((classes, dim))


def _sbm_graph(n: int, class_of: np.ndarray, means: np.ndarray, noise: float,
               p_in: float, p_out: float, rng: np.random.Generator,
               ids: Sequence | None = None) -> Graph:
    edge_rng, feat_rng = rng.spawn(2)
    edges = _sbm_edges(class_of, p_in, p_out, edge_rng)
    features = means[class_of] + noise * feat_rng.standard_normal((n, means.shape[1]))
    if ids is None:
        ids = list(range(n))
    else:
        ids = list(ids)
        edges = [(ids[u], ids[v]) for u, v in edges]
    return build_graph(edges, features.astype(np.float32), ids)


def _labels_for(class_of: np.ndarray, spec: SyntheticSpec,
                rng: np.random.Generator, bernoulli: np.ndarray | None = None) -> LabelSet:
    if spec.label_kind == "single":
        return LabelSet("single", class_of.astype(np.int64), spec.classes)
    width = spec.label_width or spec.classes
    probs = bernoulli if bernoulli is not None else _label_bernoulli(spec, rng)
    draws = rng.random((len(class_of), width)) < probs[class_of]
    return LabelSet("multi", draws.astype(np.int8), width)


def _label_bernoulli(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    width = spec.label_width or spec.classes
    return np.clip(0.15 + 0.7 * rng.random((spec.classes, width)), 0.05, 0.95)


def gen_sbm_inductive(spec: SyntheticSpec) -> InductiveDataset:
    """Block-model graph with an inductive node split.

    Test and validation nodes are excluded from the training view entirely:
    they appear in no training batch and no walk.
    """
    spec.validate()
    root = np.random.default_rng([0x5B31, spec.seed])
    mean_rng, graph_rng, split_rng, label_rng = root.spawn(4)

    n = spec.nodes
    class_of = np.arange(n) % spec.classes
    if np.bincount(class_of, minlength=spec.classes).min() == 0:
        raise DataError("empty class")
    means = _class_means(spec.classes, spec.feature_dim, mean_rng)
    g = _sbm_graph(n, class_of, means, spec.feature_noise, spec.p_in, spec.p_out, graph_rng)
    labels = _labels_for(class_of, spec, label_rng)

    perm = split_rng.permutation(n)
    n_train = int(round(spec.fractions[0] * n))
    n_val = int(round(spec.fractions[1] * n))
    return InductiveDataset(
        graph=g, labels=labels, spec=spec,
        train_nodes=np.sort(perm[:n_train]),
        val_nodes=np.sort(perm[n_train:n_train + n_val]),
        test_nodes=np.sort(perm[n_train + n_val:]),
    )


@dataclass
class MultiGraphDataset:
    graphs: list[Graph]
    labels: list[LabelSet]
    train_ids: tuple[int, ...]
    val_ids: tuple[int, ...]
    test_ids: tuple[int, ...]
    spec: SyntheticSpec


def gen_multigraph(spec: SyntheticSpec, n_graphs: int | None = None) -> MultiGraphDataset:
    """Independent block-model draws sharing one class-mean feature process."""
    spec.validate()
    counts = spec.graph_counts
    if n_graphs is None:
        n_graphs = sum(counts)
    if n_graphs < 3 or n_graphs != sum(counts):
        raise DataError("need >= 3 graphs and counts matching n_graphs")

    root = np.random.default_rng([0x6D61, spec.seed])
    mean_rng, label_proc_rng = root.spawn(2)
    means = _class_means(spec.classes, spec.feature_dim, mean_rng)
    bernoulli = _label_bernoulli(spec, label_proc_rng)

    graphs, labels = [], []
    for i in range(n_graphs):
        g_rng = np.random.default_rng([0x6D62, spec.seed, i])
        class_rng, build_rng, label_rng = g_rng.spawn(3)
        class_of = class_rng.permutation(np.arange(spec.nodes) % spec.classes)
        # ids carry the graph index so unions stay unambiguous
        ids = [(i, v) for v in range(spec.nodes)]
        graphs.append(_sbm_graph(spec.nodes, class_of, means, spec.feature_noise,
                                 spec.p_in, spec.p_out, build_rng, ids=ids))
        labels.append(_labels_for(class_of, spec, label_rng, bernoulli=bernoulli))

    train_end = counts[0]
    val_end = counts[0] + counts[1]
    return MultiGraphDataset(
        graphs=graphs, labels=labels, spec=spec,
        train_ids=tuple(range(train_end)),
        val_ids=tuple(range(train_end, val_end)),
        test_ids=tuple(range(val_end, n_graphs)),
    )


def disjoint_union(graphs: Sequence[Graph], labels: Sequence[LabelSet]) -> tuple[Graph, LabelSet]:
    """Concatenate node-disjoint graphs into one graph for shared training."""
    if not graphs:
        raise DataError("no graphs to union")
    offset = 0
    edges = []
    ids = []
    feats = []
    for g in graphs:
        for u, v in g.edge_list():
            edges.append((offset + int(u), offset + int(v)))
        ids.extend(range(offset, offset + g.node_count))
        feats.append(g.features)
        offset += g.node_count
    merged = build_graph(edges, np.concatenate(feats, axis=0), ids)
    kind = labels[0].kind
    stacked = np.concatenate([ls.labels for ls in labels], axis=0)
    return merged, LabelSet(kind, stacked, labels[0].n_classes)


def gen_gnp(n: int, p: float, feature_dim: int, rng: np.random.Generator) -> Graph:
    """Uniform random graph with i.i.d. Gaussian features (distinct almost surely)."""
    mask = np.triu(rng.random((n, n)) < p, k=1)
    edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(mask))]
    features = rng.standard_normal((n, feature_dim)).astype(np.float32)
    return build_graph(edges, features, range(n))


def clustering_targets(g: Graph) -> np.ndarray:
    """Exact per-node clustering coefficients (0 where undefined)."""
    return np.array([clustering_coefficient(g, v).value for v in range(g.node_count)],
                    dtype=np.float64)


@dataclass
class ProbeResult:
    mse: float
    baseline_mse: float
    skipped: bool
    detail: str = ""


def theorem_probe(graph_family: Sequence[Graph], trainer, *,
                  test_count: int) -> ProbeResult:
    """Regress final representations onto exact clustering coefficients.

    ``trainer`` maps (train graphs, train targets) to a scoring function for
    new graphs.  The baseline predicts the train-target mean everywhere; a
    family with constant coefficients has baseline error zero, so the probe
    is skipped there.
    """
    if test_count < 1 or test_count >= len(graph_family):
        raise DataError("need at least one train and one test graph")
    train_graphs = list(graph_family[:-test_count])
    test_graphs = list(graph_family[-test_count:])
    train_targets = [clustering_targets(g) for g in train_graphs]
    test_targets = [clustering_targets(g) for g in test_graphs]

    all_train = np.concatenate(train_targets)
    mean = all_train.mean()
    all_test = np.concatenate(test_targets)
    baseline_mse = float(((all_test - mean) ** 2).mean())
    if np.allclose(all_train, all_train[0]) and np.allclose(all_test, all_train[0]):
        return ProbeResult(mse=0.0, baseline_mse=0.0, skipped=True,
                           detail="degenerate family: constant coefficients")

    score = trainer(train_graphs, train_targets)
    preds = np.concatenate([score(g) for g in test_graphs])
    return ProbeResult(mse=float(((preds - all_test) ** 2).mean()),
                       baseline_mse=baseline_mse, skipped=False)


def noise_sweep(dataset: InductiveDataset, fractions: Sequence[float], run, *,
                seed: int = 0) -> list[dict]:
    """Retrain after replacing a growing share of feature rows with noise.

    ``run`` maps a dataset to a result dict (typically test F1 per model);
    the row order in which features are destroyed is fixed per seed so later
    fractions strictly extend earlier ones.
    """
    if any(not 0 <= f <= 1 for f in fractions):
        raise DataError("fractions must lie in [0, 1]")
    rng = np.random.default_rng([0x4E53, seed])
    order = rng.permutation(dataset.graph.node_count)
    noise = rng.standard_normal(dataset.graph.features.shape).astype(np.float32)

    results = []
    for fraction in fractions:
        k = int(round(fraction * len(order)))
        feats = dataset.graph.features.copy()
        feats[order[:k]] = noise[order[:k]]
        g = Graph(indptr=dataset.graph.indptr, indices=dataset.graph.indices,
                  features=feats, ids=dataset.graph.ids)
        noisy = InductiveDataset(graph=g, labels=dataset.labels,
                                 train_nodes=dataset.train_nodes,
                                 val_nodes=dataset.val_nodes,
                                 test_nodes=dataset.test_nodes, spec=dataset.spec)
        row = {"fraction": float(fraction)}
        row.update(run(noisy))
        results.append(row)
    return results
