"""Transformer wrapper so hop propagation composes with sklearn tooling."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from rmask.errors import ParameterError, ShapeError
from rmask.graph import Graph, add_self_loops, normalize
from rmask.mask import build_hop_mask
from rmask.ppr import ppr_all
from rmask.propagation import CombineSpec, HopFeatures, combine, propagate
from rmask.walk import WalkConfig, walk_matrices


class HopPropagator(TransformerMixin, BaseEstimator):
    """Propagate node features over ``graph`` and combine the hops.

    ``fit`` builds the graph operators (normalized adjacency, or the masked
    walk matrices in ``rmask`` mode); it ignores the values of ``X`` apart
    from its row count. ``transform`` applies them to a full ``N x d``
    feature matrix and returns the combined features.
    """

    def __init__(self, graph: Graph | None = None, mode="baseline", depth=2, r=0.5, walks=10,
                 bias="uniform", alpha=0.15, epsilon=1e-4, seed=0, combine="s2gc_average",
                 beta=None, include_raw=True):
        self.graph = graph
        self.mode = mode
        self.depth = depth
        self.r = r
        self.walks = walks
        self.bias = bias
        self.alpha = alpha
        self.epsilon = epsilon
        self.seed = seed
        self.combine = combine
        self.beta = beta
        self.include_raw = include_raw

    def fit(self, X=None, y=None):
        if self.graph is None:
            raise ParameterError("HopPropagator needs a graph")
        if self.mode not in ("baseline", "rmask"):
            raise ParameterError(f"mode must be 'baseline' or 'rmask', got {self.mode!r}")
        g = self.graph
        if X is not None and len(X) != g.num_nodes:
            raise ShapeError(f"X has {len(X)} rows, graph has {g.num_nodes} nodes")
        self.spec_ = CombineSpec(self.combine, self.beta, self.include_raw)
        if self.mode == "baseline" or self.depth == 0:
            self.adjacency_ = normalize(add_self_loops(g), self.r)
            self.walk_matrices_ = None
        else:
            cfg = WalkConfig(depth=self.depth, walks=self.walks, bias=self.bias, seed=self.seed)
            bias = ppr_all(add_self_loops(g), self.alpha, self.epsilon) if self.bias == "ppr" else None
            self.walk_matrices_ = walk_matrices(g, build_hop_mask(g, self.depth), cfg, bias)
            self.adjacency_ = None
        self.n_features_in_ = None if X is None else np.asarray(X).shape[1]
        return self

    def hop_features(self, X) -> HopFeatures:
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=np.float64)
        if X.shape[0] != self.graph.num_nodes:
            raise ShapeError(f"X has {X.shape[0]} rows, graph has {self.graph.num_nodes} nodes")
        if self.walk_matrices_ is None:
            return propagate(self.adjacency_, X, self.depth)
        return HopFeatures([X.copy()] + [w.matmul(X) for w in self.walk_matrices_], "rmask",
                           [w.coverage() for w in self.walk_matrices_])

    def transform(self, X):
        return combine(self.hop_features(X), self.spec_)
