"""Classical feature propagation and hop combination.

``propagate`` applies the normalized adjacency repeatedly (the P step of
SGC-style models); ``combine`` merges the resulting hops (the C step).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from rmask.errors import ContractError, DataError, ParameterError, ShapeError
from rmask.graph import Graph, NormalizedAdjacency, load_features, save_features

COMBINE_METHODS = ("sign_concat", "s2gc_average", "gbp_weighted", "sgc_last")


@dataclass
class HopFeatures:
    """Per-hop feature matrices; ``hops[0]`` is the raw input."""

    hops: list
    mode: str = "baseline"
    coverage: list = field(default_factory=list)

    def __post_init__(self):
        if self.hops:
            shape = self.hops[0].shape
            for k, h in enumerate(self.hops):
                if h.shape != shape:
                    raise ShapeError(f"hop {k} has shape {h.shape}, expected {shape}")

    @property
    def depth(self) -> int:
        return len(self.hops) - 1

    def __len__(self):
        return len(self.hops)

    def __getitem__(self, k):
        return self.hops[k]

    def save(self, directory) -> list:
        """Write one ``hop_<k>.rmf`` file per hop; returns the paths."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k, h in enumerate(self.hops):
            p = directory / f"hop_{k}.rmf"
            save_features(h, p)
            paths.append(p)
        return paths

    @classmethod
    def load(cls, directory, mode="baseline") -> HopFeatures:
        directory = Path(directory)
        hops = []
        while (directory / f"hop_{len(hops)}.rmf").exists():
            hops.append(load_features(directory / f"hop_{len(hops)}.rmf"))
        if not hops:
            raise DataError(f"no hop_<k>.rmf files in {directory}")
        return cls(hops, mode)


@dataclass(frozen=True)
class CombineSpec:
    method: str = "s2gc_average"
    beta: float | None = None
    include_raw: bool = True
    renormalize: bool = False

    def __post_init__(self):
        if self.method not in COMBINE_METHODS:
            raise ParameterError(f"unknown combine method {self.method!r}; expected one of {COMBINE_METHODS}")
        if self.method == "gbp_weighted":
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise ParameterError(f"gbp_weighted needs beta in (0, 1), got {self.beta}")
        elif self.beta is not None:
            raise ParameterError(f"beta only applies to gbp_weighted, not {self.method}")


def propagate(adj: NormalizedAdjacency, x0: np.ndarray, depth: int) -> HopFeatures:
    """Return ``[x0, A x0, A^2 x0, ..., A^depth x0]``; ``x0`` is not modified."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[0] != adj.num_nodes:
        raise ShapeError(f"features have shape {x0.shape}, expected ({adj.num_nodes}, d)")
    if depth < 0:
        raise ParameterError(f"depth must be >= 0, got {depth}")
    hops = [x0.copy()]
    for _ in range(depth):
        hops.append(adj.matmul(hops[-1]))
    return HopFeatures(hops, "baseline")


def stationary_matrix(g: Graph, r: float = 0.5) -> np.ndarray:
    """Closed-form limit of ``A_hat^k`` as ``k`` grows, for a connected graph.

    Entry ``(i, j)`` is ``(d_i + 1)^r (d_j + 1)^(1 - r) / (2M + N)`` with raw
    degrees ``d``. On a disconnected graph the same formula is returned with a
    warning; the true limit is block-wise per component.
    """
    if g.has_self_loops:
        raise ContractError("stationary_matrix expects the raw graph without self-loops")
    if not 0.0 <= r <= 1.0:
        raise ParameterError(f"r must lie in [0, 1], got {r}")
    n_comp, _ = connected_components(g.to_scipy(), directed=False)
    if n_comp > 1:
        warnings.warn(
            f"graph has {n_comp} connected components; the closed form only holds within each component",
            RuntimeWarning,
            stacklevel=2,
        )
    d1 = g.degrees().astype(np.float64) + 1.0
    return np.outer(d1**r, d1 ** (1.0 - r)) / (2.0 * g.num_edges + g.num_nodes)


def gbp_weights(depth: int, beta: float, renormalize: bool = False) -> np.ndarray:
    """Layer weights ``beta * (1 - beta)^l`` for ``l = 0..depth``."""
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    w = beta * (1.0 - beta) ** np.arange(depth + 1, dtype=np.float64)
    return w / w.sum() if renormalize else w


def combine(hf: HopFeatures, spec: CombineSpec) -> np.ndarray:
    if not len(hf):
        raise ContractError("cannot combine an empty hop list")
    hops = list(hf.hops)
    offset = 0
    if not spec.include_raw and spec.method != "sgc_last":
        if len(hops) == 1:
            raise ContractError("include_raw=False leaves no hops to combine")
        hops, offset = hops[1:], 1
    if spec.method == "sign_concat":
        return np.hstack(hops)
    if spec.method == "sgc_last":
        return hops[-1].copy()
    if spec.method == "s2gc_average":
        out = np.zeros_like(hops[0])
        for h in hops:
            out += h
        return out / len(hops)
    w = gbp_weights(hf.depth, spec.beta, spec.renormalize)[offset:]
    if spec.renormalize and offset:
        w = w / w.sum()
    out = np.zeros_like(hops[0])
    for wl, h in zip(w, hops):
        out += wl * h
    return out


def hop_weight_profile(adj: NormalizedAdjacency, distances: np.ndarray, nodes, depth: int) -> np.ndarray:
    """Average row-L2-normalized weight of ``A_hat^k`` per shortest-path distance.

    Returns an array ``P[k-1, h]``: for each propagation step ``k`` the mean,
    over ``nodes``, of the normalized weight mass placed on nodes at distance
    ``h``. Dense and meant for small graphs only; the choice of row-wise L2
    normalization is one reading of the weight-distribution diagnostic.
    """
    a = adj.to_dense()
    power = np.eye(adj.num_nodes)
    nodes = np.asarray(nodes)
    max_h = int(distances[np.isfinite(distances)].max()) if np.isfinite(distances).any() else 0
    out = np.zeros((depth, max_h + 1))
    for k in range(depth):
        power = a @ power
        rows = power[nodes]
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        rows = np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)
        for h in range(max_h + 1):
            sel = distances[nodes] == h
            out[k, h] = (rows * sel).sum() / len(nodes)
    return out
