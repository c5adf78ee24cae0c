"""Noise-masked random-walk feature propagation for scalable node classification.

Submodules are imported on first attribute access so that ``rmask.cli`` can
size the numba thread pool before numba loads.
"""

import importlib
import os

# the bundled TBB is too old for numba; skip it rather than warn on every run
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

__version__ = "0.1.0"

_EXPORTS = {
    "Graph": "graph",
    "NormalizedAdjacency": "graph",
    "LabeledSplit": "graph",
    "add_self_loops": "graph",
    "normalize": "graph",
    "load_edge_list": "graph",
    "load_features": "graph",
    "load_labels_and_split": "graph",
    "HopFeatures": "propagation",
    "CombineSpec": "propagation",
    "propagate": "propagation",
    "combine": "propagation",
    "stationary_matrix": "propagation",
    "HopMask": "mask",
    "build_hop_mask": "mask",
    "noise_report": "mask",
    "PprScores": "ppr",
    "ppr_exact": "ppr",
    "ppr_push": "ppr",
    "ppr_all": "ppr",
    "WalkConfig": "walk",
    "WalkMatrix": "walk",
    "walk_matrix": "walk",
    "rmask_features": "walk",
    "gsl": "metrics",
    "nsl": "metrics",
    "TrainConfig": "classifier",
    "ModelParams": "classifier",
    "SoftmaxClassifier": "classifier",
    "train": "classifier",
    "predict": "classifier",
    "accuracy": "classifier",
    "grad_check": "classifier",
    "HopPropagator": "estimators",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f"rmask.{_EXPORTS[name]}"), name)
    raise AttributeError(f"module 'rmask' has no attribute {name!r}")
