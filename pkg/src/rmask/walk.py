"""Noise-masked random walks.

A hop-``h`` walk takes exactly ``h`` steps from its source and is kept only
if it ends at shortest-path distance exactly ``h``; any shorter endpoint is
redundant lower-hop information and is rejected. The accepted endpoints of
``T`` walks per node form one row of the walk matrix ``W^h``, and
``W^h @ X`` replaces the ``h``-th propagation power.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange

from rmask._sparse import spmm
from rmask.errors import ContractError, DataError, ParameterError, ShapeError
from rmask.graph import Graph, add_self_loops
from rmask.mask import HopMask, build_hop_mask, mask_contains
from rmask.ppr import PprScores, ppr_all
from rmask.propagation import HopFeatures
from rmask.rng import next_uniform, stream_state

WALK_MAGIC = b"RMW1"
BIAS_MODES = ("uniform", "ppr")
NORMALIZATIONS = ("accepted", "walks")


@dataclass(frozen=True)
class WalkConfig:
    """Walk sampling parameters.

    ``normalization="accepted"`` divides endpoint counts by the number of
    accepted walks so every non-empty row is a distribution;
    ``"walks"`` divides by ``walks`` instead (rows then sum to the
    acceptance rate). ``max_retries`` re-draws a rejected walk from the same
    stream.
    """

    depth: int = 10
    walks: int = 10
    bias: str = "uniform"
    seed: int = 0
    max_retries: int = 0
    normalization: str = "accepted"
    bias_floor: float = 1e-12

    def __post_init__(self):
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if self.walks < 1:
            raise ParameterError(f"walks must be >= 1, got {self.walks}")
        if self.bias not in BIAS_MODES:
            raise ParameterError(f"bias must be one of {BIAS_MODES}, got {self.bias!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ParameterError(f"normalization must be one of {NORMALIZATIONS}")
        if self.max_retries < 0:
            raise ParameterError("max_retries must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in an unsigned 64-bit integer")


@njit(cache=True)
def _score(b_idx, b_val, lo, hi, u):
    end = hi
    while lo < hi:
        mid = (lo + hi) >> 1
        if b_idx[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    if lo < end and b_idx[lo] == u:
        return b_val[lo]
    return 0.0


@njit(cache=True)
def _walk(indptr, indices, source, hop, state, b_idx, b_val, b_lo, b_hi, use_bias, floor):
    """Take ``hop`` steps from ``source``; returns ``(endpoint or -1, state)``."""
    cur = np.int64(source)
    for _ in range(hop):
        lo = indptr[cur]
        hi = indptr[cur + 1]
        if use_bias:
            total = 0.0
            for k in range(lo, hi):
                w = indices[k]
                if w != cur:
                    total += _score(b_idx, b_val, b_lo, b_hi, w) + floor
            if total <= 0.0:
                return -1, state
            state, u = next_uniform(state)
            target = u * total
            acc = 0.0
            nxt = np.int64(-1)
            for k in range(lo, hi):
                w = indices[k]
                if w == cur:
                    continue
                acc += _score(b_idx, b_val, b_lo, b_hi, w) + floor
                nxt = w
                if target < acc:
                    break
        else:
            deg = 0
            for k in range(lo, hi):
                if indices[k] != cur:
                    deg += 1
            if deg == 0:
                return -1, state
            state, u = next_uniform(state)
            j = min(int(u * deg), deg - 1)
            nxt = np.int64(-1)
            for k in range(lo, hi):
                w = indices[k]
                if w == cur:
                    continue
                if j == 0:
                    nxt = w
                    break
                j -= 1
        cur = nxt
    return cur, state


@njit(parallel=True, cache=True)
def _sample_endpoints(indptr, indices, n, hop, walks, seed, m_off, m_mem, m_depth,
                      b_ptr, b_idx, b_val, use_bias, floor, retries, out):
    for v in prange(n):
        b_lo = b_ptr[v]
        b_hi = b_ptr[v + 1]
        for t in range(walks):
            state = stream_state(seed, v, hop, t)
            out[v, t] = -1
            for _ in range(retries + 1):
                e, state = _walk(indptr, indices, v, hop, state, b_idx, b_val, b_lo, b_hi, use_bias, floor)
                if e < 0:
                    break
                if mask_contains(m_off, m_mem, m_depth, v, hop, e):
                    out[v, t] = e
                    break


@njit(parallel=True, cache=True)
def _sort_and_count(out, nnz, accepted):
    for v in prange(out.shape[0]):
        row = np.sort(out[v])
        out[v] = row
        uniq = 0
        acc = 0
        prev = -1
        for e in row:
            if e >= 0:
                acc += 1
                if e != prev:
                    uniq += 1
                prev = e
        nnz[v] = uniq
        accepted[v] = acc


@njit(parallel=True, cache=True)
def _fill_rows(out, indptr, indices, weights, accepted, walks, by_walks):
    for v in prange(out.shape[0]):
        pos = indptr[v] - 1
        prev = -1
        for e in out[v]:
            if e < 0:
                continue
            if e != prev:
                pos += 1
                indices[pos] = e
                weights[pos] = 0.0
                prev = e
            weights[pos] += 1.0
        denom = walks if by_walks else accepted[v]
        for k in range(indptr[v], indptr[v + 1]):
            weights[k] = weights[k] / denom


@dataclass(frozen=True, eq=False)
class WalkMatrix:
    """Row-sparse matrix of accepted hop-``hop`` endpoints."""

    hop: int
    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    accepted: np.ndarray
    walks: int

    def row(self, v: int) -> dict:
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return dict(zip(self.indices[lo:hi].tolist(), self.weights[lo:hi].tolist()))

    @property
    def nonempty_rows(self) -> int:
        return int(np.count_nonzero(np.diff(self.indptr)))

    @property
    def acceptance_rate(self) -> float:
        total = self.num_nodes * self.walks
        return float(self.accepted.sum() / total) if total else 0.0

    def coverage(self) -> dict:
        return {"hop": self.hop, "nonempty_rows": self.nonempty_rows, "acceptance_rate": self.acceptance_rate}

    def matmul(self, x: np.ndarray) -> np.ndarray:
        return spmm(self.indptr, self.indices, self.weights, x)

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(self.num_nodes, self.num_nodes))

    def save(self, path) -> None:
        """``RMW1`` layout: hop, N, then per row its length and (node, weight) pairs."""
        n = self.num_nodes
        lengths = np.diff(self.indptr)
        buf = np.empty(n + 2 * self.indices.size, dtype="<u8")
        heads = 2 * self.indptr[:-1] + np.arange(n)
        buf[heads] = lengths
        row_of = np.repeat(np.arange(n), lengths)
        k = np.arange(self.indices.size) - self.indptr[row_of]
        pos = heads[row_of] + 1 + 2 * k
        buf[pos] = self.indices
        buf.view("<f8")[pos + 1] = self.weights
        with Path(path).open("wb") as fh:
            fh.write(WALK_MAGIC)
            fh.write(struct.pack("<QQ", self.hop, n))
            fh.write(buf.tobytes())

    @classmethod
    def load(cls, path, walks: int = 0) -> WalkMatrix:
        raw = Path(path).read_bytes()
        if raw[:4] != WALK_MAGIC:
            raise DataError(f"{path}: not an RMW1 file")
        hop, n = struct.unpack_from("<QQ", raw, 4)
        buf = np.frombuffer(raw, dtype="<u8", offset=20)
        lengths = np.empty(n, dtype=np.int64)
        pos = 0
        for v in range(n):
            lengths[v] = buf[pos]
            pos += 1 + 2 * int(buf[pos])
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        row_of = np.repeat(np.arange(n), lengths)
        heads = 2 * indptr[:-1] + np.arange(n)
        k = np.arange(indptr[-1]) - indptr[row_of]
        p = heads[row_of] + 1 + 2 * k
        return cls(int(hop), int(n), indptr, buf[p].astype(np.int64), buf.view("<f8")[p + 1].copy(),
                   np.zeros(n, dtype=np.int64), walks)


def _bias_arrays(bias: PprScores | None, n: int):
    if bias is None:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), False
    if bias.num_nodes != n:
        raise ShapeError(f"bias scores cover {bias.num_nodes} nodes, graph has {n}")
    return bias.indptr, bias.indices, bias.data, True


def single_walk(g: Graph, source: int, hop: int, mask: HopMask, bias: PprScores | None = None,
                *, seed: int = 0, walk_index: int = 0, bias_floor: float = 1e-12):
    """One masked walk; returns the accepted endpoint or ``None``.

    The walk draws from the stream keyed by ``(seed, source, hop,
    walk_index)``. With ``bias`` the next node is chosen with probability
    proportional to ``S[source, neighbour] + bias_floor``.
    """
    if hop < 1:
        raise ParameterError(f"hop must be >= 1, got {hop}")
    if hop > mask.depth:
        raise ContractError(f"mask depth {mask.depth} < hop {hop}")
    b_ptr, b_idx, b_val, use_bias = _bias_arrays(bias, g.num_nodes)
    state = np.uint64(stream_state(np.uint64(seed), source, hop, walk_index))
    e, _ = _walk(g.row_offsets, g.col_indices, source, hop, state, b_idx, b_val,
                 b_ptr[source], b_ptr[source + 1], use_bias, bias_floor)
    if e < 0 or not mask.contains(source, hop, e):
        return None
    return int(e)


def walk_matrix(g: Graph, mask: HopMask, hop: int, cfg: WalkConfig, bias: PprScores | None = None) -> WalkMatrix:
    """Sample ``cfg.walks`` masked walks per node and tabulate endpoints."""
    if not 1 <= hop <= mask.depth:
        raise ContractError(f"hop {hop} outside the mask depth 1..{mask.depth}")
    if mask.num_nodes != g.num_nodes:
        raise ShapeError("mask and graph disagree on the node count")
    if cfg.bias == "ppr" and bias is None:
        raise ContractError("bias='ppr' needs PPR scores")
    if cfg.bias == "uniform":
        bias = None
    n, t = g.num_nodes, cfg.walks
    b_ptr, b_idx, b_val, use_bias = _bias_arrays(bias, n)
    out = np.empty((n, t), dtype=np.int64)
    _sample_endpoints(g.row_offsets, g.col_indices, n, hop, t, np.uint64(cfg.seed), mask.offsets,
                      mask.members, mask.depth, b_ptr, b_idx, b_val, use_bias, cfg.bias_floor,
                      cfg.max_retries, out)
    nnz = np.zeros(n, dtype=np.int64)
    accepted = np.zeros(n, dtype=np.int64)
    _sort_and_count(out, nnz, accepted)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(nnz, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    weights = np.empty(indptr[-1], dtype=np.float64)
    _fill_rows(out, indptr, indices, weights, accepted, t, cfg.normalization == "walks")
    return WalkMatrix(hop, n, indptr, indices, weights, accepted, t)


def walk_matrices(g: Graph, mask: HopMask, cfg: WalkConfig, bias: PprScores | None = None) -> list:
    return [walk_matrix(g, mask, h, cfg, bias) for h in range(1, cfg.depth + 1)]


def rmask_features(g: Graph, x0: np.ndarray, cfg: WalkConfig, bias: PprScores | None = None,
                   mask: HopMask | None = None, matrices: list | None = None) -> HopFeatures:
    """Hop features ``[x0, W^1 x0, ..., W^H x0]`` from masked walks.

    Nodes with no accepted endpoint at hop ``h`` get an all-zero row; the
    per-hop coverage is attached to the result.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[0] != g.num_nodes:
        raise ShapeError(f"features have shape {x0.shape}, expected ({g.num_nodes}, d)")
    if matrices is None:
        if mask is None:
            mask = build_hop_mask(g, cfg.depth)
        if cfg.bias == "ppr" and bias is None:
            bias = ppr_all(add_self_loops(g))
        matrices = walk_matrices(g, mask, cfg, bias)
    hops = [x0.copy()] + [w.matmul(x0) for w in matrices]
    return HopFeatures(hops, "rmask", [w.coverage() for w in matrices])


def coverage_json(matrices) -> str:
    return json.dumps([w.coverage() for w in matrices], indent=2)
