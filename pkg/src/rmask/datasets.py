"""Dataset bundles, toy graphs, a Planetoid reader and sparsity perturbations.

A bundle is a directory holding ``edges.txt``, ``features.rmf``,
``labels.txt`` and ``train.txt``/``val.txt``/``test.txt``.
"""

from __future__ import annotations

import json
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from rmask.errors import DataError, ParameterError
from rmask.graph import (
    Graph,
    LabeledSplit,
    load_edge_list,
    load_features,
    load_labels_and_split,
    save_features,
    write_edge_list,
    write_ints,
)

BUNDLE_FILES = {
    "edge_list": "edges.txt",
    "features": "features.rmf",
    "labels": "labels.txt",
    "train": "train.txt",
    "val": "val.txt",
    "test": "test.txt",
}

FEATURE_MASK_RANGE = (0.0, 0.9)
EDGE_KEEP_RANGE = (0.1, 1.0)
LABEL_COUNT_RANGE = (1, 20)
SPARSIFY_KINDS = ("feature", "edge", "label")


@dataclass
class Bundle:
    graph: Graph
    features: np.ndarray
    split: LabeledSplit

    def save(self, directory) -> dict:
        """Write the bundle files; returns the ``graph`` config section for them."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {k: directory / v for k, v in BUNDLE_FILES.items()}
        write_edge_list(self.graph, paths["edge_list"])
        save_features(self.features, paths["features"])
        write_ints(self.split.labels, paths["labels"])
        for part in ("train", "val", "test"):
            write_ints(getattr(self.split, part), paths[part])
        return {
            "edge_list": str(paths["edge_list"]),
            "features": str(paths["features"]),
            "labels": str(paths["labels"]),
            "splits": {p: str(paths[p]) for p in ("train", "val", "test")},
        }

    @classmethod
    def load(cls, edge_list, features, labels, train, val, test) -> Bundle:
        g = load_edge_list(edge_list)
        x = load_features(features, num_nodes=g.num_nodes)
        return cls(g, x, load_labels_and_split(labels, train, val, test, num_nodes=g.num_nodes))

    @classmethod
    def load_dir(cls, directory) -> Bundle:
        d = Path(directory)
        return cls.load(*(d / BUNDLE_FILES[k] for k in ("edge_list", "features", "labels", "train", "val", "test")))


# toy graphs


def path_p3() -> Graph:
    return Graph.from_edges(3, [0, 1], [1, 2])


def triangle_k3() -> Graph:
    return Graph.from_edges(3, [0, 1, 2], [1, 2, 0])


def star_s4() -> Graph:
    """Hub 0 joined to leaves 1, 2, 3."""
    return Graph.from_edges(4, [0, 0, 0], [1, 2, 3])


def separable_toy(n_per_class: int = 10, seed: int = 0) -> Bundle:
    """Two linearly separable clusters on a graph of two cliques joined by one edge."""
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    labels = np.repeat([0, 1], n_per_class)
    x = rng.normal(scale=0.3, size=(n, 2))
    x[:, 0] += np.where(labels == 1, 2.0, -2.0)
    src, dst = [], []
    for c in range(2):
        members = range(c * n_per_class, (c + 1) * n_per_class)
        for u in members:
            for v in members:
                if u < v:
                    src.append(u)
                    dst.append(v)
    src.append(n_per_class - 1)
    dst.append(n_per_class)
    order = rng.permutation(n)
    per = n // 4
    train, val, test = order[: 2 * per], order[2 * per : 3 * per], order[3 * per :]
    return Bundle(Graph.from_edges(n, src, dst), x, LabeledSplit(labels, train, val, test))


def random_graph(n: int, p: float, seed: int = 0) -> Graph:
    """Erdos-Renyi ``G(n, p)`` without self-loops."""
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph.from_edges(n, iu[keep], ju[keep])


def sparse_random_graph(n: int, avg_degree: float, seed: int = 0) -> Graph:
    """Roughly ``n * avg_degree / 2`` uniformly random edges; scales to large ``n``."""
    rng = np.random.default_rng(seed)
    m = int(n * avg_degree / 2)
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    keep = src != dst
    return Graph.from_edges(n, src[keep], dst[keep])


def citation_like(num_nodes: int = 2708, num_classes: int = 7, num_features: int = 1433,
                  avg_degree: float = 3.9, homophily: float = 0.81, words_per_node: int = 18,
                  train_per_class: int = 20, num_val: int = 500, num_test: int = 1000,
                  seed: int = 0) -> Bundle:
    """Planted-partition graph with bag-of-words features.

    Each class draws words mostly from its own block of the vocabulary, and
    a ``homophily`` share of edges joins nodes of the same class. The split
    mirrors the usual public citation split: ``train_per_class`` per class,
    then ``num_val`` and ``num_test`` nodes.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, num_nodes)
    by_class = [np.flatnonzero(labels == c) for c in range(num_classes)]
    m = int(num_nodes * avg_degree / 2)
    src = rng.integers(0, num_nodes, m)
    same = rng.random(m) < homophily
    dst = rng.integers(0, num_nodes, m)
    for c in range(num_classes):
        pick = same & (labels[src] == c)
        dst[pick] = rng.choice(by_class[c], pick.sum())
    keep = src != dst
    g = Graph.from_edges(num_nodes, src[keep], dst[keep])

    block = num_features // num_classes
    x = np.zeros((num_nodes, num_features))
    for v in range(num_nodes):
        own = rng.random(words_per_node) < 0.5
        words = np.where(own, labels[v] * block + rng.integers(0, block, words_per_node),
                         rng.integers(0, num_features, words_per_node))
        x[v, words] = 1.0

    train = np.concatenate([rng.choice(c_nodes, train_per_class, replace=False) for c_nodes in by_class])
    rest = rng.permutation(np.setdiff1d(np.arange(num_nodes), train))
    return Bundle(g, x, LabeledSplit(labels, np.sort(train), np.sort(rest[:num_val]),
                                     np.sort(rest[num_val : num_val + num_test])))


# Planetoid raw files (ind.<name>.x, .tx, .allx, .y, .ty, .ally, .graph, .test.index)


def _unpickle(path):
    try:
        with open(path, "rb") as fh:
            return pickle.load(fh, encoding="latin1")
    except FileNotFoundError:
        raise DataError(f"missing Planetoid file {path}") from None


def load_planetoid(root, name: str = "cora") -> Bundle:
    """Read the raw Planetoid files with the standard public split.

    Train is the labeled ``y`` block, val the next 500 nodes and test the
    nodes listed in ``test.index``. Features are row-normalized.
    """
    root = Path(root)
    parts = {k: _unpickle(root / f"ind.{name}.{k}") for k in ("x", "y", "tx", "ty", "allx", "ally", "graph")}
    idx_path = root / f"ind.{name}.test.index"
    if not idx_path.exists():
        raise DataError(f"missing Planetoid file {idx_path}")
    test_idx = np.loadtxt(idx_path, dtype=np.int64).reshape(-1)
    test_sorted = np.sort(test_idx)
    tx, ty = parts["tx"], parts["ty"]
    if name == "citeseer":
        # isolated test nodes are absent from tx; pad them with zeros
        full = np.arange(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((full.size, tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((full.size, ty.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext
    feats = sp.vstack((parts["allx"], tx)).tolil()
    feats[test_idx, :] = feats[test_sorted, :]
    onehot = np.vstack((parts["ally"], ty))
    onehot[test_idx, :] = onehot[test_sorted, :]
    n = feats.shape[0]
    src, dst = [], []
    for u, nbrs in parts["graph"].items():
        for v in nbrs:
            if u != v and u < n and v < n:
                src.append(u)
                dst.append(v)
    g = Graph.from_edges(n, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64))
    x = np.asarray(feats.todense(), dtype=np.float64)
    sums = x.sum(axis=1, keepdims=True)
    x = np.divide(x, sums, out=np.zeros_like(x), where=sums > 0)
    labels = onehot.argmax(axis=1).astype(np.int64)
    n_train = parts["y"].shape[0]
    train = np.arange(n_train)
    val = np.arange(n_train, min(n_train + 500, parts["allx"].shape[0]))
    return Bundle(g, x, LabeledSplit(labels, train, val, test_sorted))


# sparsity perturbations


def sparsify_features(x, rate: float, seed: int = 0) -> np.ndarray:
    """Zero each entry independently with probability ``rate``."""
    lo, hi = FEATURE_MASK_RANGE
    if not lo <= rate <= hi:
        raise ParameterError(f"feature mask rate must lie in [{lo}, {hi}], got {rate}")
    x = np.array(x, dtype=np.float64, copy=True)
    if rate == 0.0:
        return x
    x[np.random.default_rng(seed).random(x.shape) < rate] = 0.0
    return x


def sparsify_edges(g: Graph, keep_rate: float, seed: int = 0) -> Graph:
    """Keep ``round(keep_rate * M)`` undirected edges chosen uniformly."""
    lo, hi = EDGE_KEEP_RANGE
    if not lo <= keep_rate <= hi:
        raise ParameterError(f"edge keep rate must lie in [{lo}, {hi}], got {keep_rate}")
    u, v = g.edges()
    k = int(round(keep_rate * u.size))
    if k == u.size:
        return g
    chosen = np.sort(np.random.default_rng(seed).choice(u.size, k, replace=False))
    return Graph.from_edges(g.num_nodes, u[chosen], v[chosen])


def sparsify_labels(split: LabeledSplit, per_class: int, seed: int = 0) -> LabeledSplit:
    """Resample the training set to ``per_class`` nodes of each class.

    Candidates are all nodes outside val and test, so classes smaller than
    ``per_class`` in the original training set can still be filled.
    """
    lo, hi = LABEL_COUNT_RANGE
    if int(per_class) != per_class or not lo <= per_class <= hi:
        raise ParameterError(f"label count must be an integer in [{lo}, {hi}], got {per_class}")
    rng = np.random.default_rng(seed)
    held = np.zeros(split.num_nodes, dtype=bool)
    held[split.val] = held[split.test] = True
    train = []
    for c in range(split.num_classes):
        pool = np.flatnonzero((split.labels == c) & ~held)
        if pool.size < per_class:
            raise ParameterError(f"class {c} has only {pool.size} nodes outside val/test")
        train.append(rng.choice(pool, int(per_class), replace=False))
    return LabeledSplit(split.labels, np.sort(np.concatenate(train)), split.val, split.test)


def sparsify(bundle: Bundle, kind: str, level, seed: int = 0) -> tuple[Bundle, dict]:
    """Apply one perturbation; returns the new bundle and its manifest."""
    if kind == "feature":
        out = Bundle(bundle.graph, sparsify_features(bundle.features, float(level), seed), bundle.split)
    elif kind == "edge":
        out = Bundle(sparsify_edges(bundle.graph, float(level), seed), bundle.features, bundle.split)
    elif kind == "label":
        if float(level) != int(level):
            raise ParameterError(f"label count must be an integer, got {level}")
        out = Bundle(bundle.graph, bundle.features, sparsify_labels(bundle.split, int(level), seed))
    else:
        raise ParameterError(f"kind must be one of {SPARSIFY_KINDS}, got {kind!r}")
    manifest = {
        "kind": kind,
        "level": int(level) if kind == "label" else float(level),
        "seed": int(seed),
        "num_edges": out.graph.num_edges,
        "num_train": int(out.split.train.size),
        "zero_fraction": float(np.mean(out.features == 0)),
    }
    return out, manifest


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
