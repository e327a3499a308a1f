"""Command-line entry point: gen / train / embed / eval / gradcheck / bench / probe.

Flags take precedence over a --config JSON file, which takes precedence over
built-in defaults; every run writes a manifest with the fully resolved
configuration, input digests, and timings next to its outputs.  Exit codes:
0 ok, 2 usage, 3 data error, 4 numerical failure.  Logs go to stderr, data
only to files.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .autodiff import Tape, grad_check
from .baselines import LookupEmbeddings, rotation_invariance_check, train_skipgram
from .datagen import SyntheticSpec, gen_multigraph, gen_sbm_inductive
from .errors import DataError, NumericalError
from . import fileio
from .evaluation import fit_downstream_classifier, macro_f1, micro_f1
from .graph import Graph, cap_degrees, induced_subgraph
from .model import ModelConfig, embed_nodes, init_params
from .sampling import build_minibatch_plan, draw_negatives, generate_walks, negative_distribution
from .training import TrainConfig, train_supervised, train_unsupervised


def _log(msg: str) -> None:
    print(f"[sage] {msg}", file=sys.stderr)


def _fail_line(kind: str, reason: str) -> None:
    print(f"sage: error: kind={kind} reason={reason}", file=sys.stderr)


# -- config resolution ---------------------------------------------------------

def _resolve(args, config_doc: dict, name: str, default):
    flag = getattr(args, name.replace("-", "_"), None)
    if flag is not None:
        return flag
    if name in config_doc:
        return config_doc[name]
    return default


def _load_config_doc(args) -> dict:
    path = getattr(args, "config", None)
    if not path:
        return {}
    doc = fileio.read_json(path)
    if not isinstance(doc, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return doc


def _sample_sizes(args, doc, k: int) -> tuple[int, ...]:
    defaults = {1: (25,), 2: (25, 10)}.get(k, (10,) * k)
    sizes = []
    for i in range(1, k + 1):
        sizes.append(int(_resolve(args, doc, f"s{i}", defaults[i - 1] if i <= len(defaults) else 10)))
    return tuple(sizes)


def _load_graph(args, doc) -> Graph:
    data_dir = _resolve(args, doc, "data", None)
    if data_dir:
        d = Path(data_dir)
        g = fileio.read_graph_dir(d / "ids.txt", d / "edges.tsv", d / "features.bin")
    else:
        for required in ("graph", "features"):
            if not _resolve(args, doc, required, None):
                raise DataError(f"--{required} is required (or use --data DIR)")
        edges_path = _resolve(args, doc, "graph", None)
        feats_path = _resolve(args, doc, "features", None)
        ids_path = _resolve(args, doc, "ids", None)
        edges = fileio.read_edges(edges_path)
        features = fileio.read_features(feats_path)
        if ids_path:
            ids = fileio.read_ids(ids_path)
        else:
            ids = sorted({e for pair in edges for e in pair})
        from .graph import build_graph
        g = build_graph(edges, features, ids)
    max_degree = int(_resolve(args, doc, "max_degree", 128))
    rng = np.random.default_rng([0xCA9, int(_resolve(args, doc, "seed", 0))])
    return cap_degrees(g, max_degree, rng)


def _read_node_list(path, g: Graph) -> np.ndarray:
    return np.array([g.index_of(i) for i in fileio.read_ids(path)], dtype=np.int64)


def _input_digests(*paths) -> dict:
    return {str(p): fileio.sha256_file(p) for p in paths if p and Path(p).exists()}


# -- gen ------------------------------------------------------------------------

def _spec_from_doc(doc: dict) -> SyntheticSpec:
    spec = SyntheticSpec()
    fields = {f for f in SyntheticSpec.__dataclass_fields__}
    unknown = set(doc) - fields
    if unknown:
        raise DataError(f"unknown spec fields: {sorted(unknown)}")
    coerced = dict(doc)
    for key in ("fractions", "graph_counts"):
        if key in coerced:
            coerced[key] = tuple(coerced[key])
    return replace(spec, **coerced)


def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    doc = fileio.read_json(args.spec) if args.spec else {}
    spec = _spec_from_doc(doc)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    spec = replace(spec, split=args.kind if args.kind == "multigraph" else "evolving")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    if args.kind == "sbm":
        ds = gen_sbm_inductive(spec)
        paths = fileio.write_graph_dir(outdir, ds.graph)
        fileio.write_labels(outdir / "labels.tsv", ds.graph.ids, ds.labels)
        for name, nodes in (("train", ds.train_nodes), ("val", ds.val_nodes),
                            ("test", ds.test_nodes)):
            fileio.write_ids(outdir / f"{name}.txt", [ds.graph.ids[v] for v in nodes])
        summary = {"nodes": ds.graph.node_count, "edges": ds.graph.edge_count}
    else:
        data = gen_multigraph(spec)
        split = {"train": [], "val": [], "test": []}
        for gi, (g, labels) in enumerate(zip(data.graphs, data.labels)):
            sub = outdir / f"graph{gi:02d}"
            fileio.write_graph_dir(sub, g)
            fileio.write_labels(sub / "labels.tsv", g.ids, labels)
            role = ("train" if gi in data.train_ids
                    else "val" if gi in data.val_ids else "test")
            split[role].append(sub.name)
        fileio.write_json_atomic(outdir / "split.json", split)
        summary = {"graphs": len(data.graphs)}

    lock = {f: getattr(spec, f) for f in SyntheticSpec.__dataclass_fields__}
    lock["kind"] = args.kind
    for key in ("fractions", "graph_counts"):
        lock[key] = list(lock[key])
    fileio.write_json_atomic(outdir / "spec.lock.json", lock)
    fileio.write_manifest(outdir / "dataset", command="gen", config=lock, seed=spec.seed,
                          inputs=_input_digests(args.spec),
                          timings={"total": time.perf_counter() - t0},
                          outputs={p.name: fileio.sha256_file(p)
                                   for p in sorted(outdir.rglob("*"))
                                   if p.is_file() and not p.name.endswith("manifest.json")})
    _log(f"gen {args.kind}: wrote {outdir} ({summary})")
    return 0


# -- train -----------------------------------------------------------------------

def _model_config_from(args, doc) -> ModelConfig:
    k = int(_resolve(args, doc, "k", 2))
    dim = int(_resolve(args, doc, "dim", 256))
    return ModelConfig.create(
        depth=k,
        sample_sizes=_sample_sizes(args, doc, k),
        hidden_dims=dim,
        aggregator=_resolve(args, doc, "agg", "mean"),
        pool_dim=int(_resolve(args, doc, "pool_dim", 512)),
        lstm_dim=int(_resolve(args, doc, "lstm_dim", 128)),
        negatives=int(_resolve(args, doc, "q", 20)),
        smoothing=float(_resolve(args, doc, "alpha", 0.75)),
    )


def _train_config_from(args, doc, mode: str) -> TrainConfig:
    kwargs = dict(
        mode=mode,
        seed=int(_resolve(args, doc, "seed", 0)),
        batch_size=int(_resolve(args, doc, "batch_size", 512)),
        threads=int(_resolve(args, doc, "threads", 1)),
        walks_per_node=int(_resolve(args, doc, "walks", 50)),
        walk_length=int(_resolve(args, doc, "walk_len", 5)),
    )
    lr = _resolve(args, doc, "lr", None)
    if lr is not None:
        kwargs["learning_rate"] = float(lr)
    epochs = _resolve(args, doc, "epochs", None)
    if epochs is not None:
        kwargs["epochs"] = int(epochs)
    window = _resolve(args, doc, "window", None)
    if window is not None:
        kwargs["window"] = int(window)
    max_steps = _resolve(args, doc, "max_steps", None)
    if max_steps is not None:
        kwargs["max_steps"] = int(max_steps)
    return TrainConfig(**kwargs)


def _is_multigraph_dir(path) -> bool:
    return path is not None and (Path(path) / "split.json").exists()


def _load_multigraph_union(data_dir):
    from .datagen import disjoint_union
    split = fileio.read_json(Path(data_dir) / "split.json")
    graphs, labels = [], []
    for name in split["train"]:
        d = Path(data_dir) / name
        g = fileio.read_graph_dir(d / "ids.txt", d / "edges.tsv", d / "features.bin")
        graphs.append(g)
        labels.append(fileio.read_labels(d / "labels.tsv", [str(i) for i in g.ids]))
    merged, merged_labels = disjoint_union(graphs, labels)
    return merged, merged_labels


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    doc = _load_config_doc(args)
    mode = _resolve(args, doc, "mode", "sup")
    if mode not in ("sup", "unsup", "deepwalk"):
        raise DataError(f"unknown training mode {mode!r}")
    seed = int(_resolve(args, doc, "seed", 0))
    data_dir = _resolve(args, doc, "data", None)

    if mode == "deepwalk":
        if _is_multigraph_dir(data_dir):
            raise DataError(
                "the transductive lookup baseline cannot train across disjoint graphs: "
                "independently optimized embedding spaces are arbitrarily rotated "
                "relative to each other; use --mode sup or unsup for multi-graph data")
        return _cmd_train_deepwalk(args, doc, seed, t0)

    mcfg = _model_config_from(args, doc)
    tcfg = _train_config_from(args, doc, mode)

    if _is_multigraph_dir(data_dir):
        g, labels = _load_multigraph_union(data_dir)
        train_nodes = np.arange(g.node_count)
        val = None
    else:
        g = _load_graph(args, doc)
        labels = None
        labels_path = _resolve(args, doc, "labels", None)
        if mode == "sup":
            if not labels_path:
                raise DataError("supervised training needs --labels")
            labels = fileio.read_labels(labels_path, [str(i) for i in g.ids])
        train_path = _resolve(args, doc, "train_nodes", None)
        val_path = _resolve(args, doc, "val_nodes", None)
        if train_path:
            train_nodes = _read_node_list(train_path, g)
            full = g
            g = induced_subgraph(g, train_nodes)
            if labels is not None:
                from .graph import LabelSet
                labels = LabelSet(labels.kind, labels.labels[train_nodes], labels.n_classes)
            val = None
            if val_path and mode == "sup":
                full_labels = fileio.read_labels(labels_path, [str(i) for i in full.ids])
                val = (full, _read_node_list(val_path, full), full_labels)
            train_nodes = np.arange(g.node_count)
        else:
            train_nodes = np.arange(g.node_count)
            val = None
            if val_path and mode == "sup":
                val = (g, _read_node_list(val_path, g), labels)

    if mode == "sup":
        result = train_supervised(g, train_nodes, labels, mcfg, tcfg, val=val)
    else:
        result = train_unsupervised(g, mcfg, tcfg)

    fileio.write_model(args.out, result.params)
    log_path = _resolve(args, doc, "log", None)
    if log_path:
        fileio.write_training_log(log_path, result.history)

    resolved = {
        "mode": mode, "k": mcfg.depth, "sample_sizes": list(mcfg.sample_sizes),
        "dim": mcfg.hidden_dims[-1], "agg": mcfg.aggregator, "q": mcfg.negatives,
        "alpha": mcfg.smoothing, "lr": tcfg.learning_rate, "epochs": tcfg.epochs,
        "batch_size": tcfg.batch_size, "threads": tcfg.threads,
        "max_degree": int(_resolve(args, doc, "max_degree", 128)),
    }
    fileio.write_manifest(args.out, command="train", config=resolved, seed=seed,
                          inputs=_input_digests(_resolve(args, doc, "graph", None),
                                                _resolve(args, doc, "features", None),
                                                _resolve(args, doc, "ids", None),
                                                _resolve(args, doc, "labels", None)),
                          timings={"total": time.perf_counter() - t0},
                          outputs={Path(args.out).name: fileio.sha256_file(args.out)})
    _log(f"train mode={mode} steps={len(result.history)} "
         f"final_loss={result.final_loss:.6f} -> {args.out}")
    return 0


def _cmd_train_deepwalk(args, doc, seed: int, t0: float) -> int:
    g = _load_graph(args, doc)
    rng = np.random.default_rng([0xD3E9, seed])
    walk_rng, train_rng = rng.spawn(2)
    pairs = generate_walks(g, int(_resolve(args, doc, "walks", 50)),
                           int(_resolve(args, doc, "walk_len", 5)), None, walk_rng)
    dist = negative_distribution(g, float(_resolve(args, doc, "alpha", 0.75)))
    lr = float(_resolve(args, doc, "lr", 0.4))
    emb, losses = train_skipgram(
        pairs, g.node_count, dist,
        q=int(_resolve(args, doc, "q", 20)),
        dim=int(_resolve(args, doc, "dim", 256)),
        learning_rate=lr,
        passes=int(_resolve(args, doc, "epochs", 5)),
        batch_size=int(_resolve(args, doc, "batch_size", 64)),
        rng=train_rng)
    fileio.write_features(args.out, emb.vectors)
    ids_out = Path(args.out).with_suffix(".ids.txt")
    fileio.write_ids(ids_out, g.ids)
    fileio.write_manifest(args.out, command="train", seed=seed,
                          config={"mode": "deepwalk", "lr": lr, "passes": len(losses)},
                          inputs=_input_digests(_resolve(args, doc, "graph", None),
                                                _resolve(args, doc, "features", None)),
                          timings={"total": time.perf_counter() - t0},
                          outputs={Path(args.out).name: fileio.sha256_file(args.out)})
    _log(f"train mode=deepwalk pairs={len(pairs)} final_loss={losses[-1]:.6f} -> {args.out}")
    return 0


# -- embed ------------------------------------------------------------------------

def cmd_embed(args) -> int:
    t0 = time.perf_counter()
    doc = _load_config_doc(args)
    params = fileio.read_model(args.model)
    g = _load_graph(args, doc)
    nodes = _read_node_list(args.nodes, g)
    emb = embed_nodes(g, nodes, params, seed=int(_resolve(args, doc, "seed", 0)))
    ids = [g.ids[v] for v in nodes]
    if args.format == "bin":
        fileio.write_features(args.out, emb.vectors)
        fileio.write_ids(Path(args.out).with_suffix(".ids.txt"), ids)
    else:
        fileio.write_embeddings_tsv(args.out, ids, emb.vectors)
    fileio.write_manifest(args.out, command="embed", seed=int(_resolve(args, doc, "seed", 0)),
                          config={"format": args.format, "nodes": len(nodes),
                                  "model": str(args.model)},
                          inputs=_input_digests(args.model, args.nodes,
                                                _resolve(args, doc, "graph", None),
                                                _resolve(args, doc, "features", None)),
                          timings={"total": time.perf_counter() - t0},
                          outputs={Path(args.out).name: fileio.sha256_file(args.out)})
    _log(f"embed: {len(nodes)} nodes -> {args.out}")
    return 0


# -- eval -------------------------------------------------------------------------

def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    train_ids, train_z = fileio.read_embeddings_tsv(args.train_emb)
    test_ids, test_z = fileio.read_embeddings_tsv(args.test_emb)
    labels_train = fileio.read_labels(args.labels, train_ids)
    labels_test = fileio.read_labels(args.labels, test_ids, n_classes=labels_train.n_classes)
    clf = fit_downstream_classifier(train_z, labels_train.labels, kind=labels_train.kind,
                                    n_classes=labels_train.n_classes, seed=args.seed)
    pred = clf.predict(test_z)
    scores = {
        "micro_f1": micro_f1(pred, labels_test.labels, n_classes=labels_train.n_classes),
        "macro_f1": macro_f1(pred, labels_test.labels, n_classes=labels_train.n_classes),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for name, value in scores.items():
            fh.write(f"{name}\t{value:.6f}\n")
    fileio.write_manifest(args.out, command="eval", seed=args.seed,
                          config={"kind": labels_train.kind},
                          inputs=_input_digests(args.train_emb, args.test_emb, args.labels),
                          timings={"total": time.perf_counter() - t0},
                          outputs={Path(args.out).name: fileio.sha256_file(args.out)})
    _log(f"eval: micro_f1={scores['micro_f1']:.4f} macro_f1={scores['macro_f1']:.4f}")
    return 0


# -- gradcheck ----------------------------------------------------------------------

def run_gradient_suite(seeds: int = 3, tolerance: float = 1e-4) -> list[tuple[str, str, float]]:
    """Finite-difference verification for every aggregator and both objectives."""
    from .verification import gradient_suite
    return gradient_suite(seeds=seeds)


def cmd_gradcheck(args) -> int:
    rows = run_gradient_suite(seeds=args.seeds)
    worst = max(err for _, _, err in rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("aggregator\tloss\tmax_rel_err\n")
            for agg, loss_kind, err in rows:
                fh.write(f"{agg}\t{loss_kind}\t{err:.3e}\n")
    for agg, loss_kind, err in rows:
        _log(f"gradcheck {agg}/{loss_kind}: max rel err {err:.3e}")
    if worst >= args.tolerance:
        raise NumericalError(f"gradient check failed: max rel err {worst:.3e} >= {args.tolerance}")
    _log(f"gradcheck passed: max rel err {worst:.3e} < {args.tolerance}")
    return 0


# -- bench --------------------------------------------------------------------------

def cmd_bench(args) -> int:
    t0 = time.perf_counter()
    if args.target == "sampler":
        doc = _load_config_doc(args)
        g = _load_graph(args, doc)
        k = int(_resolve(args, doc, "k", 2))
        sizes = _sample_sizes(args, doc, k)
        rng = np.random.default_rng([0xBE9C, args.seed])
        batch_rng, plan_rng = rng.spawn(2)
        start = time.perf_counter()
        slots = 0
        for _ in range(args.trials):
            batch = batch_rng.choice(g.node_count, size=min(args.batch, g.node_count),
                                     replace=False)
            plan = build_minibatch_plan(g, batch, sizes, plan_rng)
            slots += plan.total_sampled_slots
        elapsed = time.perf_counter() - start
        rows = [("plans_per_s", args.trials / elapsed),
                ("slots_per_s", slots / elapsed),
                ("trials", args.trials)]
    else:  # inference
        from .experiments import timing_comparison
        out = timing_comparison(seed=args.seed)
        rows = [("inference_s", out["inference_s"]), ("online_s", out["online_s"]),
                ("speedup", out["speedup"]), ("n_new_nodes", out["n_new_nodes"]),
                ("params_unchanged", int(out["params_unchanged"]))]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for name, value in rows:
            fh.write(f"{name}\t{value}\n")
    fileio.write_manifest(args.out, command=f"bench {args.target}", seed=args.seed,
                          config={"target": args.target},
                          inputs={}, timings={"total": time.perf_counter() - t0},
                          outputs={Path(args.out).name: fileio.sha256_file(args.out)})
    for name, value in rows:
        _log(f"bench {args.target}: {name}={value}")
    return 0


# -- probe ---------------------------------------------------------------------------

def cmd_probe(args) -> int:
    t0 = time.perf_counter()
    if args.target == "rotation":
        rng = np.random.default_rng([0x6F72, args.seed])
        init_rng, pair_rng, q_rng = rng.spawn(3)
        n, dim = 40, args.dim
        vectors = init_rng.standard_normal((n, dim))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        pairs = pair_rng.integers(0, n, size=(200, 2))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        negatives = pair_rng.integers(0, n, size=(len(pairs), 5))
        emb = LookupEmbeddings(vectors, np.ones(n, bool))
        worst = rotation_invariance_check(emb, pairs, negatives, q_rng, trials=args.trials)
        rows = [("max_abs_delta", worst), ("trials", args.trials)]
    elif args.target == "theorem1":
        from .experiments import run_theorem_probe
        probe = run_theorem_probe(seed=args.seed)
        rows = [("test_mse", probe.mse), ("baseline_mse", probe.baseline_mse),
                ("skipped", int(probe.skipped))]
    else:  # noise
        from .experiments import dataset_for_seed, run_supervised_benchmark
        from .datagen import noise_sweep
        fractions = [float(x) for x in args.fractions.split(",")]
        aggs = args.aggs.split(",")
        dataset = dataset_for_seed(args.seed)

        def run(noisy):
            out = {}
            for agg in aggs:
                res = run_supervised_benchmark(noisy, args.seed, aggregator=agg)
                out[f"f1_{agg}"] = res["test_f1"]
            return out

        rows = []
        for entry in noise_sweep(dataset, fractions, run, seed=args.seed):
            for key, value in entry.items():
                if key != "fraction":
                    rows.append((f"{key}@{entry['fraction']}", value))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for name, value in rows:
            fh.write(f"{name}\t{value}\n")
    fileio.write_manifest(args.out, command=f"probe {args.target}", seed=args.seed,
                          config={"target": args.target},
                          inputs={}, timings={"total": time.perf_counter() - t0},
                          outputs={Path(args.out).name: fileio.sha256_file(args.out)})
    for name, value in rows:
        _log(f"probe {args.target}: {name}={value}")
    return 0


# -- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sage", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sage {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic benchmark dataset")
    p.add_argument("--kind", choices=("sbm", "multigraph"), required=True)
    p.add_argument("--spec", help="JSON file with generator spec overrides")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a model")
    _add_graph_flags(p)
    p.add_argument("--labels")
    p.add_argument("--train-nodes")
    p.add_argument("--val-nodes")
    p.add_argument("--mode", choices=("sup", "unsup", "deepwalk"))
    p.add_argument("--agg", choices=("mean", "gcn", "pool", "lstm"))
    p.add_argument("--k", type=int)
    for i in range(1, 7):
        p.add_argument(f"--s{i}", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--walks", type=int)
    p.add_argument("--walk-len", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--log")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("embed", help="embed listed nodes with a trained model")
    _add_graph_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--nodes", required=True)
    p.add_argument("--format", choices=("tsv", "bin"), default="tsv")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("eval", help="downstream classifier on frozen embeddings")
    p.add_argument("--train-emb", required=True)
    p.add_argument("--test-emb", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", help="throughput and latency measurements")
    p.add_argument("target", choices=("sampler", "inference"))
    _add_graph_flags(p, required=False)
    p.add_argument("--k", type=int)
    for i in range(1, 7):
        p.add_argument(f"--s{i}", type=int)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("probe", help="structure and invariance probes")
    p.add_argument("target", choices=("rotation", "theorem1", "noise"))
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--fractions", default="0,0.3,0.6,1.0")
    p.add_argument("--aggs", default="mean,pool")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_probe)
    return parser


def _add_graph_flags(p, required: bool = False) -> None:
    p.add_argument("--graph", required=False)
    p.add_argument("--features", required=False)
    p.add_argument("--ids", required=False)
    p.add_argument("--data", required=False, help="directory produced by `sage gen`")
    p.add_argument("--max-degree", type=int)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (DataError, FileNotFoundError) as exc:
        _fail_line("data", str(exc))
        return 3
    except NumericalError as exc:
        _fail_line("numerical", str(exc))
        return 4
    except ad.ShapeError as exc:
        _fail_line("data", str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
