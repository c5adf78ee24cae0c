"""Preprocess and train stages shared by the CLI and the estimators."""

from __future__ import annotations

import contextlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rmask import config as cfgmod
from rmask.classifier import accuracy, predict, train
from rmask.errors import ConfigError, RMaskError
from rmask.graph import add_self_loops, load_edge_list, load_features, load_labels_and_split, normalize
from rmask.mask import build_hop_mask, noise_report
from rmask.ppr import ppr_all
from rmask.propagation import HopFeatures, combine, propagate
from rmask.walk import walk_matrices

logger = logging.getLogger(__name__)

NOISE_MAX_NODES = 5000


@contextlib.contextmanager
def stage(name: str):
    """Tag any library error raised inside with the stage ``name``."""
    try:
        yield
    except RMaskError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


@dataclass
class Timer:
    """Monotonic per-stage wall time in integer milliseconds."""

    ms: dict = field(default_factory=dict)

    @contextlib.contextmanager
    def __call__(self, name: str):
        start = time.perf_counter_ns()
        with stage(name):
            yield
        self.ms[f"{name}_ms"] = self.ms.get(f"{name}_ms", 0) + (time.perf_counter_ns() - start) // 1_000_000


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_graph_and_features(doc: dict):
    g = load_edge_list(doc["graph"]["edge_list"])
    x = load_features(doc["graph"]["features"], num_nodes=g.num_nodes)
    return g, x


def load_split(doc: dict, num_nodes: int):
    gsec = doc["graph"]
    if "labels" not in gsec or "splits" not in gsec:
        raise ConfigError("training needs graph.labels and graph.splits in the config")
    s = gsec["splits"]
    return load_labels_and_split(gsec["labels"], s["train"], s["val"], s["test"], num_nodes=num_nodes)


@dataclass
class PreprocessResult:
    hops: HopFeatures
    stats: dict
    coverage: list | None = None
    noise: dict | None = None


def preprocess(doc: dict, timer: Timer, g=None, x=None) -> PreprocessResult:
    """Build hop features for the configured mode.

    ``rmask`` runs mask, optional PPR and walks; ``baseline`` takes powers
    of the normalized adjacency. Both report a noise profile when the graph
    is small enough for the all-pairs table.
    """
    p = doc["propagation"]
    if g is None:
        with timer("load"):
            g, x = load_graph_and_features(doc)
    depth = p["depth_H"]
    noise = None
    if p["mode"] == "baseline" or depth == 0:
        with timer("prop"):
            adj = normalize(add_self_loops(g), p["r"])
            hf = propagate(adj, x, depth)
        coverage = None
    else:
        wcfg = cfgmod.walk_config(doc)
        with timer("mask"):
            mask = build_hop_mask(g, depth)
        bias = None
        with timer("ppr"):
            if p["bias"] == "ppr":
                bias = ppr_all(add_self_loops(g), p["alpha"], p["epsilon"], top_k=p["top_k"])
        with timer("walk"):
            mats = walk_matrices(g, mask, wcfg, bias)
        with timer("prop"):
            x = np.asarray(x, dtype=np.float64)
            hf = HopFeatures([x.copy()] + [w.matmul(x) for w in mats], "rmask", [w.coverage() for w in mats])
        coverage = hf.coverage
    if depth >= 1 and g.num_nodes <= NOISE_MAX_NODES:
        with timer("noise"):
            noise = noise_report(g, normalize(add_self_loops(g), p["r"]), depth).to_json()
    stats = {
        "mode": p["mode"],
        "num_nodes": g.num_nodes,
        "num_edges": g.num_edges,
        "feature_dim": int(x.shape[1]),
        "depth": depth,
    }
    return PreprocessResult(hf, stats, coverage, noise)


def write_preprocess(result: PreprocessResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    result.hops.save(out)
    write_json(result.stats, out / "stats.json")
    if result.coverage is not None:
        write_json(result.coverage, out / "coverage.json")
    if result.noise is not None:
        write_json(result.noise, out / "noise.json")


@dataclass
class TrainOutcome:
    metrics: dict
    history: list
    params: object


def train_stage(doc: dict, hops: HopFeatures, split) -> TrainOutcome:
    spec = cfgmod.combine_spec(doc)
    tcfg = cfgmod.train_config(doc)
    with stage("combine"):
        x = combine(hops, spec)
    with stage("train"):
        result = train(x, split, tcfg)
        pred = predict(result.params, x)
    metrics = {
        "mode": doc["propagation"]["mode"],
        "combine": spec.method,
        "depth": hops.depth,
        "train_acc": accuracy(pred, split.labels, split.train),
        "val_acc": accuracy(pred, split.labels, split.val),
        "test_acc": accuracy(pred, split.labels, split.test),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
    }
    return TrainOutcome(metrics, result.history, result.params)


def write_train(outcome: TrainOutcome, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_json(outcome.metrics, out / "metrics.json")
    with (out / "history.jsonl").open("w", encoding="utf-8") as fh:
        for rec in outcome.history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    outcome.params.save(out / "model.rmc")


def run_pipeline(doc: dict, out: Path | None = None) -> tuple[TrainOutcome, dict]:
    """Preprocess then train, optionally writing every output under ``out``.

    Training reads the hop features at the on-disk 32-bit precision, so a
    pipeline run and a separate ``preprocess``/``train`` pair agree.
    """
    timer = Timer()
    start = time.perf_counter_ns()
    pre = preprocess(doc, timer)
    with timer("load"):
        split = load_split(doc, pre.stats["num_nodes"])
    hops = HopFeatures([h.astype(np.float32).astype(np.float64) for h in pre.hops.hops],
                       pre.hops.mode, pre.hops.coverage)
    # the noise profile is a diagnostic, not part of the propagation cost
    preprocess_ms = sum(v for k, v in timer.ms.items() if k != "noise_ms")
    t0 = time.perf_counter_ns()
    outcome = train_stage(doc, hops, split)
    train_ms = (time.perf_counter_ns() - t0) // 1_000_000
    total_ms = (time.perf_counter_ns() - start) // 1_000_000
    timing = dict(timer.ms, train_ms=train_ms)
    breakdown = {
        "preprocess_ms": preprocess_ms,
        "train_ms": train_ms,
        "total_ms": total_ms,
        "preprocess_share": preprocess_ms / total_ms if total_ms else 0.0,
    }
    if out is not None:
        write_preprocess(pre, out)
        write_train(outcome, out)
        write_json(timing, out / "timing.json")
        write_json(breakdown, out / "breakdown.json")
    return outcome, breakdown
