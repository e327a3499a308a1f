"""On-disk formats: edge lists, feature/model binaries, labels, manifests.

Binary layouts are little-endian.  Features: magic ``SAGEF1``, u64 rows, u64
cols, then row-major float32.  Models: magic ``SAGEM1``, u32 version, a
length-prefixed canonical JSON config blob, then parameter tensors in
declaration order as (u64 rows, u64 cols, float32 row-major).  Manifests are
written atomically (temp file + rename) next to their outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .graph import Graph, LabelSet, build_graph
from .model import ModelConfig, ModelParams

FEATURE_MAGIC = b"SAGEF1"
MODEL_MAGIC = b"SAGEM1"
MODEL_VERSION = 1


# -- text formats -----------------------------------------------------------

def write_ids(path, ids: Sequence) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


def read_ids(path) -> list[str]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            out.append(line)
    return out


def write_edges(path, edges: Sequence[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in edges:
            fh.write(f"{u}\t{v}\n")


def read_edges(path) -> list[tuple[str, str]]:
    edges = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'u<TAB>v', got {raw!r}")
        edges.append((parts[0], parts[1]))
    return edges


def write_labels(path, ids: Sequence, labels: LabelSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, node_id in enumerate(ids):
            if labels.kind == "single":
                fh.write(f"{node_id}\t{int(labels.labels[i])}\n")
            else:
                row = ",".join(str(int(b)) for b in labels.labels[i])
                fh.write(f"{node_id}\t{row}\n")


def read_labels(path, ids: Sequence[str], n_classes: int | None = None) -> LabelSet:
    """Parse ``id<TAB>label`` or ``id<TAB>b1,...,bL`` rows aligned to ``ids``."""
    table = {}
    kind = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'id<TAB>label', got {raw!r}")
        node_id, payload = parts
        if "," in payload:
            row_kind = "multi"
            value = np.array([int(b) for b in payload.split(",")], dtype=np.int8)
        else:
            row_kind = "single"
            value = int(payload)
        kind = kind or row_kind
        if kind != row_kind:
            raise DataError(f"{path}:{lineno}: mixed single/multi label rows")
        table[node_id] = value
    if kind is None:
        raise DataError(f"{path}: no label rows")
    missing = [i for i in ids if i not in table]
    if missing:
        raise DataError(f"{path}: missing labels for {len(missing)} id(s), e.g. {missing[0]!r}")
    if kind == "single":
        values = np.array([table[i] for i in ids], dtype=np.int64)
        return LabelSet("single", values, n_classes or int(values.max()) + 1)
    widths = {len(v) for v in table.values()}
    if len(widths) != 1:
        raise DataError(f"{path}: inconsistent label vector widths {sorted(widths)}")
    values = np.stack([table[i] for i in ids])
    return LabelSet("multi", values, values.shape[1])


# -- feature / embedding binaries ---------------------------------------------

def write_features(path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())


def read_features(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:6] != FEATURE_MAGIC:
        raise DataError(f"{path}: bad feature magic {blob[:6]!r}")
    rows, cols = struct.unpack_from("<QQ", blob, 6)
    expected = 6 + 16 + rows * cols * 4
    if len(blob) != expected:
        raise DataError(f"{path}: truncated feature file ({len(blob)} != {expected} bytes)")
    data = np.frombuffer(blob, dtype="<f4", offset=22).reshape(rows, cols)
    return np.ascontiguousarray(data)


def write_embeddings_tsv(path, ids: Sequence, vectors: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node_id, row in zip(ids, vectors):
            fh.write(f"{node_id}\t" + ",".join(repr(float(x)) for x in row) + "\n")


def read_embeddings_tsv(path) -> tuple[list[str], np.ndarray]:
    ids, rows = [], []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 'id<TAB>v1,...,vd'")
        ids.append(parts[0])
        rows.append(np.array([float(x) for x in parts[1].split(",")], dtype=np.float32))
    if not rows:
        raise DataError(f"{path}: no embedding rows")
    return ids, np.stack(rows)


# -- model binary ---------------------------------------------------------------

def _config_blob(params: ModelParams) -> bytes:
    cfg = params.config
    doc = {
        "depth": cfg.depth,
        "sample_sizes": list(cfg.sample_sizes),
        "hidden_dims": list(cfg.hidden_dims),
        "aggregator": cfg.aggregator,
        "pool_dim": cfg.pool_dim,
        "lstm_dim": cfg.lstm_dim,
        "negatives": cfg.negatives,
        "smoothing": cfg.smoothing,
        "normalize_output": cfg.normalize_output,
        "activation": cfg.activation,
        "feature_dim": params.feature_dim,
        "head_kind": params.head_kind,
        "n_outputs": params.n_outputs,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_model(path, params: ModelParams) -> None:
    blob = _config_blob(params)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in params.arrays.values():
            arr32 = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<QQ", arr32.shape[0], arr32.shape[1]))
            fh.write(arr32.tobytes())


def read_model(path) -> ModelParams:
    from .model import init_params  # parameter schema source of truth

    blob = Path(path).read_bytes()
    if blob[:6] != MODEL_MAGIC:
        raise DataError(f"{path}: bad model magic {blob[:6]!r}")
    (version,) = struct.unpack_from("<I", blob, 6)
    if version != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    (cfg_len,) = struct.unpack_from("<Q", blob, 10)
    doc = json.loads(blob[18:18 + cfg_len].decode("utf-8"))
    cfg = ModelConfig(
        depth=doc["depth"], sample_sizes=tuple(doc["sample_sizes"]),
        hidden_dims=tuple(doc["hidden_dims"]), aggregator=doc["aggregator"],
        pool_dim=doc["pool_dim"], lstm_dim=doc["lstm_dim"], negatives=doc["negatives"],
        smoothing=doc["smoothing"], normalize_output=doc["normalize_output"],
        activation=doc["activation"],
    )
    template = init_params(cfg, doc["feature_dim"], np.random.default_rng(0),
                           head_kind=doc["head_kind"], n_outputs=doc["n_outputs"])
    offset = 18 + cfg_len
    arrays = {}
    for name, ref in template.arrays.items():
        rows, cols = struct.unpack_from("<QQ", blob, offset)
        offset += 16
        if (rows, cols) != ref.shape:
            raise DataError(f"{path}: tensor {name} has shape {(rows, cols)}, expected {ref.shape}")
        count = rows * cols
        arrays[name] = np.ascontiguousarray(
            np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(rows, cols))
        offset += count * 4
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} trailing bytes")
    return ModelParams(cfg, doc["feature_dim"], arrays, doc["head_kind"], doc["n_outputs"])


# -- run manifest -----------------------------------------------------------------

def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json_atomic(path, doc: dict) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_manifest(output_path, *, command: str, config: dict, seed: int | None,
                   inputs: dict[str, str], timings: dict[str, float],
                   outputs: dict[str, str] | None = None) -> Path:
    """Record resolved configuration and digests next to an output file."""
    from . import __version__

    manifest_path = Path(str(output_path) + ".manifest.json")
    doc = {
        "tool": "sage",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "input_digests": inputs,
        "output_digests": outputs or {},
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    write_json_atomic(manifest_path, doc)
    return manifest_path


def write_training_log(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step\tloss\tval_loss\n")
        for row in history:
            val = "" if row.val_loss != row.val_loss else repr(float(row.val_loss))
            fh.write(f"{row.step}\t{float(row.loss)!r}\t{val}\n")


# -- full graph round trip -----------------------------------------------------------

def write_graph_dir(outdir, g: Graph) -> dict[str, Path]:
    """ids + edges + features trio; parsing them rebuilds the graph bit-exactly."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "ids": outdir / "ids.txt",
        "edges": outdir / "edges.tsv",
        "features": outdir / "features.bin",
    }
    write_ids(paths["ids"], g.ids)
    write_edges(paths["edges"], [(g.ids[u], g.ids[v]) for u, v in g.edge_list()])
    write_features(paths["features"], g.features)
    return paths


def read_graph_dir(ids_path, edges_path, features_path) -> Graph:
    ids = read_ids(ids_path)
    edges = read_edges(edges_path)
    features = read_features(features_path)
    if features.shape[0] != len(ids):
        raise DataError(f"feature rows ({features.shape[0]}) != ids ({len(ids)})")
    return build_graph(edges, features, ids)
