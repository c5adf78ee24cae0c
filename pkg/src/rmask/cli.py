"""``rmask`` command-line front end.

Exit codes: 0 success, 2 config or usage error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

logger = logging.getLogger("rmask")

GRADCHECK_THRESHOLD = 1e-5
GLOBAL_FLAGS = ("config", "workers", "out", "seed", "verbose")


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's unset flag from clobbering one given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="pipeline config (JSON)")
    common.add_argument("--workers", type=int, help="threads for parallel kernels")
    common.add_argument("--out", type=str, help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="overrides every seed in the config")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rmask", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="build hop feature files")
    sub.add_parser("train", parents=[common], help="train on hop features written by preprocess")
    sub.add_parser("pipeline", parents=[common], help="preprocess then train, with a time breakdown")
    m = sub.add_parser("metrics", parents=[common], help="smoothness level of each hop feature file")
    m.add_argument("features", nargs="*", type=Path, help="feature files, one per hop, in hop order")
    sub.add_parser("noise", parents=[common], help="per-hop noise report of the configured graph")
    s = sub.add_parser("sparsify", parents=[common], help="write a perturbed copy of the dataset bundle")
    s.add_argument("--kind", required=True, choices=("feature", "edge", "label"))
    s.add_argument("--level", required=True, type=float,
                   help="feature mask rate, edge keep rate, or training nodes per class")
    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the classifier")
    gc.add_argument("--layers", type=int, nargs="+", default=[1, 2])
    gc.add_argument("--epsilon-fd", type=float, default=1e-5)
    return parser


def _require_config(args):
    from rmask.config import load_config
    from rmask.errors import ConfigError

    if args.config is None:
        raise ConfigError(f"'{args.command}' needs --config")
    return load_config(args.config, seed=args.seed, out=args.out)


def _out_dir(args, doc=None) -> Path:
    if args.out:
        return Path(args.out)
    if doc is not None:
        return Path(doc["output"]["directory"])
    return Path("out")


def cmd_preprocess(args) -> None:
    from rmask.config import dumps
    from rmask.pipeline import Timer, preprocess, write_json, write_preprocess

    doc = _require_config(args)
    out = _out_dir(args, doc)
    timer = Timer()
    result = preprocess(doc, timer)
    with timer("write"):
        write_preprocess(result, out)
    (out / "config.json").write_text(dumps(doc), encoding="utf-8")
    write_json(timer.ms, out / "timing.json")


def cmd_train(args) -> None:
    import time

    from rmask.config import dumps
    from rmask.pipeline import load_split, stage, train_stage, write_json, write_train
    from rmask.propagation import HopFeatures

    doc = _require_config(args)
    out = _out_dir(args, doc)
    with stage("load"):
        hops = HopFeatures.load(out, doc["propagation"]["mode"])
        split = load_split(doc, hops[0].shape[0])
    start = time.perf_counter_ns()
    outcome = train_stage(doc, hops, split)
    train_ms = (time.perf_counter_ns() - start) // 1_000_000
    write_train(outcome, out)
    (out / "config.json").write_text(dumps(doc), encoding="utf-8")
    write_json({"train_ms": train_ms}, out / "train_timing.json")


def cmd_pipeline(args) -> None:
    from rmask.config import dumps
    from rmask.pipeline import run_pipeline

    doc = _require_config(args)
    out = _out_dir(args, doc)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dumps(doc), encoding="utf-8")
    outcome, breakdown = run_pipeline(doc, out)
    logger.info("test_acc=%.4f preprocess_ms=%d train_ms=%d", outcome.metrics["test_acc"],
                breakdown["preprocess_ms"], breakdown["train_ms"])


def cmd_metrics(args) -> None:
    from rmask.errors import ConfigError
    from rmask.graph import load_features
    from rmask.metrics import gsl_per_hop
    from rmask.pipeline import stage, write_json

    if not args.features:
        raise ConfigError("metrics needs at least one feature file")
    with stage("load"):
        hops = [load_features(p) for p in args.features]
    with stage("metrics"):
        result = gsl_per_hop(hops)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    write_json(result, out / "gsl.json")


def cmd_noise(args) -> None:
    from rmask.errors import ConfigError
    from rmask.graph import add_self_loops, load_edge_list, normalize
    from rmask.mask import noise_report
    from rmask.pipeline import stage, write_json

    doc = _require_config(args)
    depth = doc["propagation"]["depth_H"]
    if depth < 1:
        raise ConfigError("noise report needs propagation.depth_H >= 1")
    with stage("load"):
        g = load_edge_list(doc["graph"]["edge_list"])
    with stage("noise"):
        report = noise_report(g, normalize(add_self_loops(g), doc["propagation"]["r"]), depth)
    out = _out_dir(args, doc)
    out.mkdir(parents=True, exist_ok=True)
    write_json(report.to_json(), out / "noise.json")


def cmd_sparsify(args) -> None:
    from rmask.config import dumps
    from rmask.datasets import Bundle, sparsify, write_manifest
    from rmask.pipeline import load_graph_and_features, load_split, stage

    doc = _require_config(args)
    out = _out_dir(args, doc)
    with stage("load"):
        g, x = load_graph_and_features(doc)
        bundle = Bundle(g, x, load_split(doc, g.num_nodes))
    with stage("sparsify"):
        level = int(args.level) if args.kind == "label" and args.level == int(args.level) else args.level
        new, manifest = sparsify(bundle, args.kind, level, doc["propagation"]["seed"])
    out = out.resolve()
    doc["graph"] = new.save(out)
    doc["output"]["directory"] = str((out / "run").resolve())
    write_manifest(manifest, out / "manifest.json")
    (out / "config.json").write_text(dumps(doc), encoding="utf-8")


def cmd_gradcheck(args) -> None:
    import numpy as np

    from rmask.classifier import grad_check, init_params
    from rmask.errors import NumericError
    from rmask.pipeline import write_json

    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(8, 5)) + 0.5
    y = np.arange(8) % 3
    results = []
    for layers in args.layers:
        m = init_params(5, 3, hidden_dim=4, num_layers=layers, seed=seed)
        for _, b in m.layers:
            b += rng.normal(scale=0.1, size=b.shape)
        results.append({"num_layers": layers, "max_rel_error": grad_check(m, x, y, args.epsilon_fd, 1e-3)})
    passed = all(r["max_rel_error"] < GRADCHECK_THRESHOLD for r in results)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    write_json({"threshold": GRADCHECK_THRESHOLD, "passed": passed, "results": results}, out / "gradcheck.json")
    if not passed:
        raise NumericError(f"gradient check above {GRADCHECK_THRESHOLD}: {results}")


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "pipeline": cmd_pipeline,
    "metrics": cmd_metrics,
    "noise": cmd_noise,
    "sparsify": cmd_sparsify,
    "gradcheck": cmd_gradcheck,
}


def _configure_threads(n: int | None) -> None:
    # numba sizes its pool once at import; grow it first when more is asked for
    if n is None or "numba" in sys.modules:
        return
    current = int(os.environ.get("NUMBA_NUM_THREADS", os.cpu_count() or 1))
    if n > current:
        os.environ["NUMBA_NUM_THREADS"] = str(n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in GLOBAL_FLAGS:
        if not hasattr(args, name):
            setattr(args, name, False if name == "verbose" else None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    _configure_threads(args.workers)

    from rmask.errors import RMaskError
    from rmask.parallel import set_workers

    try:
        set_workers(args.workers)
        COMMANDS[args.command](args)
    except RMaskError as exc:
        where = f"{args.command}/{exc.stage}" if getattr(exc, "stage", None) else args.command
        print(f"rmask {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
